#include "eal/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <ostream>

#include "eal/ops.hpp"
#include "eal/parallel.hpp"
#include "eal/random.hpp"
#include "eal/report.hpp"
#include "eal/spectral.hpp"

namespace eal {

namespace fs = std::filesystem;

namespace {

using Cell = CsvWriter::Cell;
using I = std::int64_t;

constexpr double nan_value = std::numeric_limits<double>::quiet_NaN();
const std::vector<std::string> palette{"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
const char* truth_color = "#7f7f7f";

class Log {
 public:
  explicit Log(std::ostream* out) : out_(out) {}
  void operator()(const std::string& line) {
    if (!out_) return;
    std::lock_guard<std::mutex> lock(mutex_);
    *out_ << line << '\n';
    out_->flush();
  }

 private:
  std::ostream* out_;
  std::mutex mutex_;
};

struct Context {
  const ExperimentConfig& config;
  fs::path dir;
  std::string hash;
  std::size_t threads;
  Log& log;
  std::vector<std::string>& failures;

  std::string file(const std::string& name) const { return (dir / name).string(); }
  CsvWriter csv(const std::string& name, const std::vector<std::string>& columns) const {
    return CsvWriter(file(name), hash, config.seed, columns);
  }
  void svg(const std::string& name, const std::string& title, const std::vector<Panel>& panels,
           std::size_t columns) const {
    write_svg(file(name), title, panels, columns, hash, config.seed);
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> finite_only(const std::vector<double>& v) {
  std::vector<double> out;
  for (double x : v) {
    if (std::isfinite(x)) out.push_back(x);
  }
  return out;
}

double median(const std::vector<double>& values) {
  auto v = finite_only(values);
  if (v.empty()) return nan_value;
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::vector<double> iota_real(std::size_t n, double start = 0.0, double step = 1.0) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = start + step * static_cast<double>(i);
  return v;
}

// ---------------------------------------------------------------- sine-recon

SineDataset sine_dataset(const SineBlock& b) {
  SineDataset d;
  d.phases = b.phases;
  d.t_max = b.t_max;
  return d;
}

AttentionConfig sine_attention(AttentionVariant v) {
  AttentionConfig c;
  c.variant = v;
  c.n = 3;
  c.d = 3;
  c.heads = 1;
  return c;
}

const char* sine_label(AttentionVariant v) { return v == AttentionVariant::self ? "self" : "easy"; }

json run_sine(const Context& ctx) {
  const auto& s = ctx.config.sine;
  const std::vector<AttentionVariant> variants{AttentionVariant::easy_dense, AttentionVariant::self};
  std::vector<std::uint64_t> seeds(s.seeds);
  for (std::size_t i = 0; i < s.seeds; ++i) seeds[i] = derive_seed(ctx.config.seed, "sine-run-" + std::to_string(i));

  const std::size_t jobs = variants.size() * seeds.size();
  std::vector<SineRun> runs(jobs);
  std::vector<std::string> errors(jobs);
  parallel_for(jobs, ctx.threads, [&](std::size_t j) {
    const auto v = variants[j / seeds.size()];
    const auto i = j % seeds.size();
    try {
      runs[j] = train_sine_module(v, s.dataset, s.training, seeds[i]);
      ctx.log(std::string("sine ") + sine_label(v) + " run " + std::to_string(i) + ": error " +
              format_real(runs[j].error_percent) + "%");
    } catch (const std::exception& e) {
      errors[j] = std::string("sine-recon ") + sine_label(v) + " run " + std::to_string(i) + ": " + e.what();
      runs[j].error_percent = nan_value;
    }
  });
  for (const auto& e : errors) {
    if (!e.empty()) ctx.failures.push_back(e);
  }

  auto table = ctx.csv("table.csv", {"model", "parameters", "flops", "error_percent"});
  auto per_seed = ctx.csv("per_seed.csv", {"model", "run", "run_seed", "error_percent", "final_loss"});
  auto loss = ctx.csv("loss.csv", {"model", "epoch", "loss"});
  json models = json::array();
  std::vector<const SineRun*> shown(variants.size(), nullptr);

  for (std::size_t vi = 0; vi < variants.size(); ++vi) {
    const auto v = variants[vi];
    const auto ac = sine_attention(v);
    std::vector<double> errs;
    double seconds = 0.0;
    std::size_t done = 0;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      const auto& r = runs[vi * seeds.size() + i];
      errs.push_back(r.error_percent);
      per_seed.row({sine_label(v), I(i), seeds[i], r.error_percent,
                    r.loss_curve.empty() ? nan_value : r.loss_curve.back()});
      if (r.module) {
        seconds += r.seconds;
        ++done;
        if (audit_params(r.module->parameters()) != attention_param_count(ac)) {
          throw std::logic_error("sine module parameter audit disagrees with the closed form");
        }
      }
    }
    // The run at the median position stands in for the plots and checkpoints.
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      if (std::isfinite(errs[i])) order.push_back(i);
    }
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return errs[a] < errs[b]; });
    const double err = median(errs);
    table.row({sine_label(v), I(attention_param_count(ac)), flops_estimate(ac), err});
    json entry{{"model", sine_label(v)},
               {"parameters", attention_param_count(ac)},
               {"flops", flops_estimate(ac)},
               {"error_percent", number(err)},
               {"per_seed_error_percent", json::array()},
               {"t_c_seconds", done ? seconds / static_cast<double>(done) : 0.0}};
    for (double e : errs) entry["per_seed_error_percent"].push_back(number(e));
    if (!order.empty()) {
      const auto& rep = runs[vi * seeds.size() + order[(order.size() - 1) / 2]];
      shown[vi] = &rep;
      entry["loss_monotone_fraction"] = loss_monotone_fraction(rep.loss_curve);
      for (std::size_t e = 0; e < rep.loss_curve.size(); ++e) loss.row({sine_label(v), I(e), rep.loss_curve[e]});
      save_checkpoint(ctx.file(std::string(sine_label(v)) + "_module.ckpt"), rep.module->parameters());
    }
    models.push_back(entry);
  }

  // Overlay of the last predicted row (the next value of every wave).
  const auto data = sine_dataset(s.dataset);
  auto preds = ctx.csv("predictions.csv", {"t", "feature", "truth", "easy", "self"});
  std::vector<Panel> panels;
  const std::size_t samples = data.last() - data.first();
  for (std::size_t f = 0; f < 3; ++f) {
    Panel p{"wave " + std::to_string(f + 1), "t", "y", {}};
    Series truth{"truth", {}, {}, truth_color, false, 2.5};
    std::vector<Series> model_series;
    for (std::size_t vi = 0; vi < variants.size(); ++vi) {
      model_series.push_back({sine_label(variants[vi]), {}, {}, palette[vi], false, 1.2});
    }
    for (std::size_t k = 0; k < samples; ++k) {
      const double t = static_cast<double>(data.first() + k + 1);
      const std::size_t at = k * 9 + 2 * 3 + f;
      const double y = data.value(f, t);
      std::vector<Cell> row{I(data.first() + k + 1), I(f), y};
      truth.x.push_back(t);
      truth.y.push_back(y);
      for (std::size_t vi = 0; vi < variants.size(); ++vi) {
        const double v = shown[vi] ? shown[vi]->predictions[at] : nan_value;
        row.push_back(v);
        model_series[vi].x.push_back(t);
        model_series[vi].y.push_back(v);
      }
      preds.row(row);
    }
    p.series.push_back(truth);
    for (auto& m : model_series) p.series.push_back(m);
    panels.push_back(p);
  }
  ctx.svg("reconstruction.svg", "Sine wave prediction", panels, 3);
  return {{"models", models}, {"run_seeds", seeds}};
}

// -------------------------------------------------------------- svd-analyze

json run_svd(const Context& ctx) {
  const auto& s = ctx.config.svd;
  const auto ac = sine_attention(AttentionVariant::self);
  std::shared_ptr<Attention> module;
  std::string source;
  json extra = json::object();
  if (!s.checkpoint.empty()) {
    Rng rng(derive_seed(ctx.config.seed, "svd-placeholder"));
    module = std::make_shared<Attention>(ac, rng);
    auto named = module->parameters();
    restore_checkpoint(s.checkpoint, named);
    source = "checkpoint";
  } else if (s.train_inline) {
    auto run = train_sine_module(AttentionVariant::self, s.dataset, s.training,
                                 derive_seed(ctx.config.seed, "svd-train"));
    module = run.module;
    source = "trained inline";
    extra["error_percent"] = run.error_percent;
    extra["t_c_seconds"] = run.seconds;
    save_checkpoint(ctx.file("self_module.ckpt"), module->parameters());
  } else {
    throw ConfigError("checkpoint: no checkpoint given and train_inline is false");
  }
  ctx.log("svd-analyze: self module " + source);

  const auto data = sine_dataset(s.dataset);
  const SvdReport report = svd_analyze(data, *module);
  for (const auto& f : report.failures) ctx.failures.push_back("svd-analyze " + f);

  json families = json::array();
  for (const SvdFamily* fam : {&report.combination, &report.weighted, &report.score}) {
    std::vector<std::string> sv_cols{"t"}, vec_cols{"t"};
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t i = 0; i < 3; ++i) sv_cols.push_back("row" + std::to_string(r) + "_s" + std::to_string(i + 1));
      for (std::size_t i = 0; i < 3; ++i) vec_cols.push_back("row" + std::to_string(r) + "_u" + std::to_string(i + 1));
      for (std::size_t i = 0; i < 3; ++i) vec_cols.push_back("row" + std::to_string(r) + "_v" + std::to_string(i + 1));
    }
    auto sv = ctx.csv("singular_values_" + fam->name + ".csv", sv_cols);
    auto vec = ctx.csv("vectors_" + fam->name + ".csv", vec_cols);
    Panel panel{"leading singular pair, " + fam->name, "u_i", "v_i", {}};
    for (std::size_t i = 0; i < 3; ++i) {
      panel.series.push_back({"i=" + std::to_string(i + 1), {}, {}, palette[i], true, 1.0});
    }
    double max_second = 0.0;
    for (std::size_t k = 0; k < report.times.size(); ++k) {
      std::vector<Cell> sv_row{I(report.times[k])}, vec_row{I(report.times[k])};
      for (std::size_t r = 0; r < 3; ++r) {
        const Svd& d = fam->samples[k][r];
        const bool ok = d.rank == 3;
        for (std::size_t i = 0; i < 3; ++i) sv_row.push_back(ok ? d.s[i] : nan_value);
        if (ok) max_second = std::max(max_second, d.s[1]);
        // Leading left and right singular vectors.
        for (std::size_t i = 0; i < 3; ++i) vec_row.push_back(ok ? d.u[i * 3] : nan_value);
        for (std::size_t i = 0; i < 3; ++i) vec_row.push_back(ok ? d.v[i * 3] : nan_value);
        if (ok) {
          for (std::size_t i = 0; i < 3; ++i) {
            panel.series[i].x.push_back(d.u[i * 3]);
            panel.series[i].y.push_back(d.v[i * 3]);
          }
        }
      }
      sv.row(sv_row);
      vec.row(vec_row);
    }
    ctx.svg("scatter_" + fam->name + ".svg", "Singular vectors: " + fam->name, {panel}, 1);
    families.push_back({{"family", fam->name},
                        {"samples", fam->samples.size()},
                        {"max_second_singular_value", max_second},
                        {"max_reconstruction_error", fam->max_reconstruction_error}});
  }

  auto alpha = ctx.csv("alpha_diagonal.csv", {"t", "alpha_11", "alpha_22", "alpha_33"});
  Panel ap{"diagonal of the attention score", "t", "alpha_ii", {}};
  for (std::size_t i = 0; i < 3; ++i) {
    ap.series.push_back({"alpha_" + std::to_string(i + 1) + std::to_string(i + 1), {}, {}, palette[i], false, 1.2});
  }
  for (std::size_t k = 0; k < report.times.size(); ++k) {
    std::vector<Cell> row{I(report.times[k])};
    for (std::size_t i = 0; i < 3; ++i) {
      row.push_back(report.alpha_diagonal[k][i]);
      ap.series[i].x.push_back(static_cast<double>(report.times[k]));
      ap.series[i].y.push_back(report.alpha_diagonal[k][i]);
    }
    alpha.row(row);
  }
  ctx.svg("alpha_diagonal.svg", "Self-attention score diagonal", {ap}, 1);

  json out{{"source", source}, {"samples", report.times.size()}, {"families", families}};
  out.update(extra);
  return out;
}

// ---------------------------------------------------------------- vdp-recon

json run_vdp(const Context& ctx) {
  const auto& v = ctx.config.vdp;
  auto table = ctx.csv("table.csv", {"case", "variant", "k", "mean_error_percent", "energy", "oracle_energy",
                                     "parameters", "diverged_modules"});
  auto comps = ctx.csv("components.csv", {"case", "variant", "bin", "period", "input_size", "amplitude",
                                          "error_percent", "diverged"});
  json cases = json::array();
  for (const auto& name : v.cases) {
    const auto traj = rk4_integrate(vdp_system(vdp_case(name)), {v.initial[0], v.initial[1]}, 0.0, v.dt,
                                    v.transient + v.steps - 1)
                          .tail(v.transient);
    const auto x = traj.column(0);
    auto spectrum = dft(x);
    if (v.k == 0) {
      select_top_k(spectrum, x, v.target_energy);
    } else {
      select_top_k_fixed(spectrum, std::min(v.k, spectrum.ranked_units().size()));
    }
    const auto truncation = idft(spectrum, spectrum.top_k);
    const auto k = spectrum.top_k.size();
    ctx.log("vdp " + name + ": M=" + std::to_string(x.size()) + " K=" + std::to_string(k));

    std::vector<std::string> cols{"step", "t", "signal", "truncation"};
    std::vector<ReconstructionResult> results;
    json rows = json::array();
    for (auto variant : v.variants) {
      ReconstructionConfig rc;
      rc.variant = variant;
      rc.epochs = v.training.epochs;
      rc.batch = v.training.batch;
      rc.learning_rate = v.training.learning_rate;
      rc.momentum = v.training.momentum;
      rc.input_cap = v.input_cap;
      rc.seed = derive_seed(ctx.config.seed, "vdp-" + name);
      const auto t0 = std::chrono::steady_clock::now();
      auto r = multi_attention_reconstruct(x, spectrum, rc, ctx.threads);
      const double seconds = seconds_since(t0);
      const auto label = to_string(variant);
      std::size_t diverged = 0;
      for (const auto& c : r.components) {
        comps.row({name, label, I(c.bin), c.period, I(c.input_size), c.amplitude, 100.0 * c.error,
                   I(c.diverged ? 1 : 0)});
        if (c.diverged) {
          ++diverged;
          ctx.failures.push_back("vdp-recon " + name + " " + label + " bin " + std::to_string(c.bin) + ": " +
                                 c.message);
        }
      }
      table.row({name, label, I(k), 100.0 * r.mean_error, r.energy, r.oracle_energy, I(r.parameters), I(diverged)});
      char line[128];
      std::snprintf(line, sizeof line, ": mean error %.4f%%, E %.3f (oracle %.3f)", 100.0 * r.mean_error, r.energy,
                    r.oracle_energy);
      ctx.log("vdp " + name + " " + label + line);
      rows.push_back({{"variant", label},
                      {"k", k},
                      {"mean_error_percent", 100.0 * r.mean_error},
                      {"energy", number(r.energy)},
                      {"oracle_energy", r.oracle_energy},
                      {"parameters", r.parameters},
                      {"diverged_modules", diverged},
                      {"t_c_seconds", seconds}});
      cols.push_back(label);
      results.push_back(std::move(r));
    }

    auto rec = ctx.csv("reconstruction_" + name + ".csv", cols);
    for (std::size_t t = 0; t < x.size(); ++t) {
      std::vector<Cell> row{I(t), traj.time(t), x[t], truncation[t]};
      for (const auto& r : results) row.push_back(r.reconstruction[t]);
      rec.row(row);
    }
    const auto times = iota_real(x.size(), traj.t0, traj.dt);
    Panel p{name + " case, x(t)", "t", "x", {}};
    p.series.push_back({"signal", times, x, truth_color, false, 2.5});
    p.series.push_back({"K-bin truncation", times, truncation, "#000000", false, 0.8});
    for (std::size_t i = 0; i < results.size(); ++i) {
      p.series.push_back({to_string(v.variants[i]), times, results[i].reconstruction, palette[i], false, 1.2});
    }
    ctx.svg("reconstruction_" + name + ".svg", "Van der Pol reconstruction", {p}, 1);
    cases.push_back({{"case", name}, {"samples", x.size()}, {"k", k}, {"rows", rows}});
  }
  return {{"cases", cases}};
}

// ------------------------------------------------------------------- lorenz

std::unique_ptr<Forecaster> make_forecaster(const LorenzSettings& l, const std::string& name, Rng& rng) {
  if (name == "lstm") {
    LstmConfig c;
    c.p = l.transformer.p;
    c.d = 3;
    c.hidden = l.lstm_hidden;
    c.predict_increment = l.transformer.predict_increment;
    return std::make_unique<Lstm>(c, rng);
  }
  TransformerConfig c = l.transformer;
  c.d = 3;
  c.attention = parse_attention_variant(name);
  return std::make_unique<Transformer>(c, rng);
}

std::uint64_t attention_flops(const LorenzSettings& l, const std::string& name) {
  if (name == "lstm" || name == "persistence") return 0;
  AttentionConfig ac;
  ac.variant = parse_attention_variant(name);
  ac.n = l.transformer.p;
  ac.d = l.transformer.d_model;
  ac.heads = l.transformer.heads;
  ac.band_l = l.transformer.band_l;
  return static_cast<std::uint64_t>(l.transformer.blocks) * flops_estimate(ac);
}

struct LorenzData {
  std::uint64_t seed = 0;
  LorenzCorpus corpus;
  Normalizer norm;
  WindowedDataset train;
  std::vector<double> spread;
};

struct LorenzJob {
  std::size_t repeat = 0;
  std::string model;
  std::size_t parameters = 0;
  IntervalResult interval;
  RolloutResult rollout;
  std::vector<double> loss;
  double train_seconds = 0.0;
  double eval_seconds = 0.0;
  std::string error;
};

json run_lorenz(const Context& ctx) {
  const auto& l = ctx.config.lorenz;
  const std::size_t p = l.transformer.p;

  std::vector<LorenzData> data(l.repeats);
  for (std::size_t r = 0; r < l.repeats; ++r) {
    auto& d = data[r];
    d.seed = derive_seed(ctx.config.seed, "lorenz-repeat-" + std::to_string(r));
    auto cc = l.dataset;
    cc.seed = d.seed;
    d.corpus = lorenz_corpus(cc);
    d.norm = l.normalize ? Normalizer::fit(d.corpus.train) : Normalizer::identity(3);
    for (const auto& t : d.corpus.train) d.train.append(window(d.norm.apply(t), p, "train", l.window_stride));
    d.spread = increment_spread(d.train);
    if (d.corpus.test.length() < p + l.horizon + 1) {
      throw ConfigError("dataset.test_steps: test series too short for p + horizon");
    }
  }
  ctx.log("lorenz: " + std::to_string(l.repeats) + " repeat(s), " + std::to_string(data[0].train.size()) +
          " training windows each");

  std::vector<LorenzJob> jobs;
  for (std::size_t r = 0; r < l.repeats; ++r) {
    for (const auto& m : l.models) jobs.push_back({r, m, 0, {}, {}, {}, 0.0, 0.0, {}});
  }
  parallel_for(jobs.size(), ctx.threads, [&](std::size_t j) {
    auto& job = jobs[j];
    const auto& d = data[job.repeat];
    const std::string tag = "lorenz repeat " + std::to_string(job.repeat) + " " + job.model;
    try {
      Rng rng(derive_seed(d.seed, "init-" + job.model));
      auto model = make_forecaster(l, job.model, rng);
      job.parameters = audit_params(*model);
      if (l.transformer.predict_increment) model->set_increment_scale(d.spread);
      auto rep = train(*model, d.train, train_spec(l.training, derive_seed(d.seed, "shuffle-" + job.model)));
      job.loss = rep.loss_curve;
      job.train_seconds = rep.seconds;
      const auto t0 = std::chrono::steady_clock::now();
      const auto step = model_step(*model, d.norm);
      job.interval = evaluate_interval(step, d.corpus.test, p, l.horizon, l.max_anchors);
      job.eval_seconds = seconds_since(t0);
      std::vector<State> seed_window;
      for (std::size_t i = 0; i < p; ++i) seed_window.push_back(d.corpus.test.row(i));
      job.rollout = rollout(step, seed_window, l.rollout_steps, d.corpus.test.time(p), d.corpus.test.dt);
      char line[96];
      std::snprintf(line, sizeof line, ": error %.3f%%, train %.1f s, eval %.1f s", job.interval.error_percent,
                    job.train_seconds, job.eval_seconds);
      ctx.log(tag + line);
    } catch (const std::exception& e) {
      job.error = tag + ": " + e.what();
      ctx.log(job.error);
    }
  });

  auto table = ctx.csv("table.csv", {"model", "repeat", "repeat_seed", "parameters", "attention_flops",
                                     "error_percent", "anchors", "status"});
  auto anchors = ctx.csv("anchors.csv", {"model", "repeat", "anchor", "error_percent"});
  auto loss = ctx.csv("loss.csv", {"model", "repeat", "epoch", "loss"});
  json runs = json::array();
  for (std::size_t r = 0; r < l.repeats; ++r) {
    for (auto& job : jobs) {
      if (job.repeat != r) continue;
      const bool ok = job.error.empty();
      if (!ok) ctx.failures.push_back(job.error);
      const double err = ok ? job.interval.error_percent : nan_value;
      table.row({job.model, I(r), data[r].seed, I(job.parameters), attention_flops(l, job.model), err,
                 I(job.interval.anchors.size()), std::string(ok ? "ok" : "failed")});
      for (std::size_t a = 0; a < job.interval.anchors.size(); ++a) {
        anchors.row({job.model, I(r), I(job.interval.anchors[a]), job.interval.per_anchor[a]});
      }
      for (std::size_t e = 0; e < job.loss.size(); ++e) loss.row({job.model, I(r), I(e), job.loss[e]});
      runs.push_back({{"model", job.model},
                      {"repeat", r},
                      {"repeat_seed", data[r].seed},
                      {"parameters", job.parameters},
                      {"attention_flops", attention_flops(l, job.model)},
                      {"error_percent", number(err)},
                      {"anchors", job.interval.anchors.size()},
                      {"t_c_seconds", job.train_seconds},
                      {"eval_seconds", job.eval_seconds},
                      {"loss_monotone_fraction", loss_monotone_fraction(job.loss)},
                      {"rollout_truncated", job.rollout.truncated},
                      {"status", ok ? "ok" : "failed"}});
      if (!ok) continue;

      const auto& test = data[r].corpus.test;
      const auto& pred = job.rollout.trajectory;
      auto roll = ctx.csv("rollout_" + job.model + "_r" + std::to_string(r) + ".csv",
                          {"step", "t", "x", "y", "z", "x_true", "y_true", "z_true"});
      for (std::size_t i = 0; i < pred.length(); ++i) {
        const bool has_truth = p + i < test.length();
        std::vector<Cell> row{I(i), pred.time(i), pred.at(i, 0), pred.at(i, 1), pred.at(i, 2)};
        for (std::size_t c = 0; c < 3; ++c) row.push_back(has_truth ? test.at(p + i, c) : nan_value);
        roll.row(row);
      }
      if (r != 0) continue;
      const char* axes = "xyz";
      std::vector<Panel> panels;
      for (auto [a, b] : {std::pair{0, 1}, std::pair{0, 2}, std::pair{1, 2}}) {
        Panel panel{std::string(1, axes[a]) + "-" + axes[b] + " plane", std::string(1, axes[a]),
                    std::string(1, axes[b]), {}};
        Series truth{"reference", {}, {}, truth_color, false, 0.8};
        Series model{job.model, {}, {}, palette[0], false, 0.8};
        for (std::size_t i = 0; i < pred.length(); ++i) {
          if (p + i < test.length()) {
            truth.x.push_back(test.at(p + i, a));
            truth.y.push_back(test.at(p + i, b));
          }
          model.x.push_back(pred.at(i, a));
          model.y.push_back(pred.at(i, b));
        }
        panel.series = {truth, model};
        panels.push_back(panel);
      }
      ctx.svg("attractor_" + job.model + ".svg",
              "Lorenz rollout, " + job.model + ", " + std::to_string(pred.length()) + " steps", panels, 3);
    }
    if (l.with_baselines) {
      const auto res = evaluate_interval(persistence_step(), data[r].corpus.test, p, l.horizon, l.max_anchors);
      table.row({std::string("persistence"), I(r), data[r].seed, I(0), std::uint64_t{0}, res.error_percent,
                 I(res.anchors.size()), std::string("ok")});
      runs.push_back({{"model", "persistence"},
                      {"repeat", r},
                      {"repeat_seed", data[r].seed},
                      {"parameters", 0},
                      {"attention_flops", 0},
                      {"error_percent", res.error_percent},
                      {"anchors", res.anchors.size()},
                      {"status", "ok"}});
    }
  }

  auto summary = ctx.csv("summary.csv", {"model", "repeats_ok", "mean_error_percent", "median_error_percent"});
  json models = json::array();
  std::vector<std::string> names = l.models;
  if (l.with_baselines) names.push_back("persistence");
  for (const auto& m : names) {
    std::vector<double> errs;
    for (const auto& run : runs) {
      if (run["model"] == m && run["error_percent"].is_number()) errs.push_back(run["error_percent"].get<double>());
    }
    double mean = nan_value;
    if (!errs.empty()) {
      mean = 0.0;
      for (double e : errs) mean += e;
      mean /= static_cast<double>(errs.size());
    }
    summary.row({m, I(errs.size()), mean, median(errs)});
    models.push_back({{"model", m}, {"mean_error_percent", number(mean)}, {"median_error_percent", number(median(errs))}});
  }
  const double ratio = static_cast<double>(attention_flops(l, "easy_dense")) /
                       static_cast<double>(attention_flops(l, "self"));
  return {{"runs", runs},
          {"summary", models},
          {"flops_ratio_easy_over_self", ratio},
          {"training_windows", data[0].train.size()}};
}

}  // namespace

double loss_monotone_fraction(const std::vector<double>& loss) {
  if (loss.size() < 2) return 1.0;
  std::size_t ok = 0;
  for (std::size_t e = 1; e < loss.size(); ++e) ok += loss[e] <= loss[e - 1];
  return static_cast<double>(ok) / static_cast<double>(loss.size() - 1);
}

SineRun train_sine_module(AttentionVariant variant, const SineBlock& block, const TrainingBlock& training,
                          std::uint64_t seed) {
  const auto data = sine_dataset(block);
  std::vector<Tensor> xs, ys;
  for (std::size_t t = data.first(); t < data.last(); ++t) {
    xs.push_back(data.input(t));
    ys.push_back(data.input(t + 1));
  }
  SineRun run;
  Rng rng(derive_seed(seed, "init"));
  run.module = std::make_shared<Attention>(sine_attention(variant), rng);
  const Attention& a = *run.module;
  const auto report = train_loop(trainable(a.parameters()), xs.size(), train_spec(training, derive_seed(seed, "shuffle")),
                                 [&](const std::vector<std::size_t>& idx) {
                                   std::vector<Tensor> bx, by;
                                   for (auto i : idx) {
                                     bx.push_back(xs[i]);
                                     by.push_back(ys[i]);
                                   }
                                   return mse_loss(a.forward(concat(bx, 0), idx.size()), concat(by, 0));
                                 });
  run.loss_curve = report.loss_curve;
  run.seconds = report.seconds;
  const Tensor pred = a.forward(concat(xs, 0), xs.size());
  run.predictions = pred.values();
  run.targets = concat(ys, 0).values();
  run.error_percent = 100.0 * rel_l2(run.targets, run.predictions);
  return run;
}

RunOutcome run_experiment(const ExperimentConfig& config, std::size_t threads, std::ostream* log_stream) {
  if (config.experiment == "svd-analyze") {
    if (config.svd.checkpoint.empty() && !config.svd.train_inline) {
      throw ConfigError("checkpoint: no checkpoint given and train_inline is false");
    }
    if (!config.svd.checkpoint.empty() && !fs::exists(config.svd.checkpoint)) {
      throw ConfigError("checkpoint: file " + config.svd.checkpoint + " does not exist");
    }
  }
  RunOutcome out;
  const auto hash = config.hash();
  const fs::path dir = fs::path(config.out_dir) / (config.experiment + "-" + hash);
  fs::create_directories(dir);
  out.directory = dir.string();
  Log log(log_stream);
  Context ctx{config, dir, hash, std::max<std::size_t>(1, threads), log, out.failures};
  log(config.experiment + " -> " + out.directory);

  {
    std::ofstream cfg(dir / "config.json", std::ios::binary);
    cfg << config.resolved().dump(2) << '\n';
  }
  const auto t0 = std::chrono::steady_clock::now();
  json results;
  if (config.experiment == "sine-recon") {
    results = run_sine(ctx);
  } else if (config.experiment == "svd-analyze") {
    results = run_svd(ctx);
  } else if (config.experiment == "vdp-recon") {
    results = run_vdp(ctx);
  } else if (config.experiment == "lorenz") {
    results = run_lorenz(ctx);
  } else {
    throw ConfigError("unknown experiment '" + config.experiment + "'");
  }
  out.metrics = {{"experiment", config.experiment},
                 {"config_hash", hash},
                 {"seed", config.seed},
                 {"config", config.resolved()},
                 {"results", results},
                 {"failures", out.failures},
                 {"wall_seconds", seconds_since(t0)}};
  std::ofstream m(dir / "metrics.json", std::ios::binary);
  m << out.metrics.dump(2) << '\n';
  return out;
}

}  // namespace eal
