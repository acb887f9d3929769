#include <malloc.h>

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "eal/experiments.hpp"
#include "eal/parallel.hpp"

int main(int argc, char** argv) {
  // Keep large tensor buffers on the heap instead of fresh mmaps per step.
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);

  CLI::App app{"Easy-attention experiments: sine-recon, svd-analyze, vdp-recon, lorenz"};
  app.require_subcommand(1);

  struct Options {
    std::string config;
    bool full = false;
    bool desk = false;
    std::uint64_t seed = 0;
    bool with_baselines = false;
    std::string out_dir;
    std::string checkpoint;
    bool train_inline = false;
    bool quiet = false;
  } opt;

  for (const auto& name : eal::experiment_names()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", opt.config, "JSON config file (defaults apply when omitted)");
    auto* desk = sub->add_flag("--desk-scale", opt.desk, "reduced budget (default)");
    sub->add_flag("--full-scale", opt.full, "full budget")->excludes(desk);
    sub->add_option("--seed", opt.seed, "root seed, overrides the config");
    sub->add_option("--out-dir", opt.out_dir, "output root, overrides the config");
    sub->add_flag("-q,--quiet", opt.quiet, "no progress lines");
    if (name == "lorenz") sub->add_flag("--with-baselines", opt.with_baselines, "add the persistence baseline row");
    if (name == "svd-analyze") {
      sub->add_option("--checkpoint", opt.checkpoint, "trained sine self-attention checkpoint");
      sub->add_flag("--train-inline", opt.train_inline, "train the module when no checkpoint is given");
    }
  }
  CLI11_PARSE(app, argc, argv);
  const auto* sub = app.get_subcommands().front();
  const std::string experiment = sub->get_name();

  try {
    const eal::Scale scale = opt.full ? eal::Scale::full : eal::Scale::desk;
    const bool scale_given = opt.full || opt.desk;
    eal::ExperimentConfig config =
        opt.config.empty()
            ? eal::parse_config(eal::json::object(), experiment, &scale)
            : eal::load_config(opt.config, experiment, scale_given ? &scale : nullptr);
    if (sub->count("--seed")) config.seed = opt.seed;
    if (!opt.out_dir.empty()) config.out_dir = opt.out_dir;
    if (opt.with_baselines) config.lorenz.with_baselines = true;
    if (!opt.checkpoint.empty()) config.svd.checkpoint = opt.checkpoint;
    if (experiment == "svd-analyze" && sub->count("--train-inline")) config.svd.train_inline = true;

    auto outcome = eal::run_experiment(config, eal::worker_count(), opt.quiet ? nullptr : &std::cerr);
    std::cout << outcome.directory << '\n';
    if (!outcome.failures.empty()) {
      std::cerr << outcome.failures.size() << " sub-run(s) failed:\n";
      for (const auto& f : outcome.failures) std::cerr << "  " << f << '\n';
      return 1;
    }
    return 0;
  } catch (const eal::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
