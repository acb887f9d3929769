#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "eal/dynsys.hpp"
#include "eal/models.hpp"
#include "eal/optim.hpp"
#include "eal/trainer.hpp"

namespace eal {

using json = nlohmann::ordered_json;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Scale { desk, full };

struct TrainingBlock {
  OptimizerKind optimizer = OptimizerKind::sgd_momentum;
  double learning_rate = 1e-3;
  double momentum = 0.98;
  std::size_t epochs = 1000;
  std::size_t batch = 8;
  bool cosine_decay = false;
};

struct SineBlock {
  std::array<double, 3> phases{0.0, 1.0, 3.0};
  std::size_t t_max = 50;
};

struct SineReconSettings {
  SineBlock dataset;
  TrainingBlock training;
  std::size_t seeds = 5;  // reported error is the median over these runs
};

struct SvdSettings {
  SineBlock dataset;
  TrainingBlock training;
  std::string checkpoint;  // empty: train inline when allowed
  bool train_inline = false;
};

struct VdpSettings {
  std::vector<std::string> cases{"periodic"};
  std::size_t steps = 2000;
  std::size_t transient = 0;
  double dt = 0.01;
  std::array<double, 2> initial{1.0, 0.0};
  std::size_t k = 10;  // 0 selects K from target_energy
  double target_energy = 90.0;
  std::size_t input_cap = 64;
  TrainingBlock training{OptimizerKind::sgd_momentum, 1e-3, 0.98, 200, 8, false};
  std::vector<AttentionVariant> variants{AttentionVariant::easy_dense, AttentionVariant::self};
};

struct LorenzSettings {
  LorenzCorpusConfig dataset;
  std::size_t window_stride = 40;
  bool normalize = true;
  TransformerConfig transformer;
  std::size_t lstm_hidden = 128;
  TrainingBlock training{OptimizerKind::adam, 1e-3, 0.0, 30, 32, true};
  std::size_t horizon = 512;
  std::size_t max_anchors = 0;
  std::size_t rollout_steps = 4000;
  std::vector<std::string> models{"easy_dense", "easy_sparse", "self", "lstm"};
  std::size_t repeats = 1;
  bool with_baselines = false;
};

struct ExperimentConfig {
  std::string experiment;
  std::uint64_t seed = 0;
  Scale scale = Scale::desk;
  std::string out_dir = "runs";

  SineReconSettings sine;
  SvdSettings svd;
  VdpSettings vdp;
  LorenzSettings lorenz;

  // Every resolved setting of the active experiment, out_dir excluded.
  json resolved() const;
  // 16 hex digits of FNV-1a over resolved().dump().
  std::string hash() const;
};

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"sine-recon", "svd-analyze", "vdp-recon", "lorenz"};
  return names;
}

// Defaults for an experiment at the given scale.
ExperimentConfig default_config(const std::string& experiment, Scale scale);

// Overrides from `doc` are applied on top of default_config(experiment, scale).
// Unknown keys and ill-typed values raise ConfigError naming the field path.
// `scale_override`, when set, wins over a "scale" key in the document.
ExperimentConfig parse_config(const json& doc, const std::string& experiment,
                              const Scale* scale_override = nullptr);
ExperimentConfig load_config(const std::string& path, const std::string& experiment,
                             const Scale* scale_override = nullptr);

OptimizerConfig optimizer_config(const TrainingBlock& t);
TrainSpec train_spec(const TrainingBlock& t, std::uint64_t seed);

}  // namespace eal
