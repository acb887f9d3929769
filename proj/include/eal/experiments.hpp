#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "eal/config.hpp"

namespace eal {

struct RunOutcome {
  std::string directory;
  json metrics;
  std::vector<std::string> failures;  // sub-runs that aborted
};

// Runs one experiment and writes its artifacts under <out_dir>/<experiment>-<hash>/.
// Sub-run failures are collected, not thrown; configuration errors are thrown.
RunOutcome run_experiment(const ExperimentConfig& config, std::size_t threads, std::ostream* log = nullptr);

// One sine attention module trained on the three-wave prediction task.
struct SineRun {
  std::shared_ptr<Attention> module;
  std::vector<double> loss_curve;
  std::vector<double> predictions;  // [samples, 3, 3]
  std::vector<double> targets;      // same layout
  double error_percent = 0.0;      // one norm over every output entry
  double seconds = 0.0;
};

SineRun train_sine_module(AttentionVariant variant, const SineBlock& data, const TrainingBlock& training,
                          std::uint64_t seed);

// Fraction of epochs whose mean loss did not rise over the previous epoch.
double loss_monotone_fraction(const std::vector<double>& loss);

}  // namespace eal
