#include "eal/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "eal/random.hpp"

namespace eal {

namespace {

std::string optimizer_name(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

// Walks one JSON object, remembering which keys were read so leftovers can be
// reported as unknown.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where("") + "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  Fields child(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Fields(j_.contains(key) ? j_.at(key) : empty, where(key));
  }

  void count(const std::string& key, std::size_t& out, std::size_t min = 1) {
    if (!take(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(min)) {
      throw ConfigError(where(key) + ": expected an integer >= " + std::to_string(min));
    }
    out = v.get<std::size_t>();
  }

  void seed(const std::string& key, std::uint64_t& out) {
    if (!take(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      throw ConfigError(where(key) + ": expected a non-negative integer");
    }
    out = v.get<std::uint64_t>();
  }

  void real(const std::string& key, double& out, double lo, double hi) {
    if (!take(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number() || v.get<double>() < lo || v.get<double>() > hi) {
      throw ConfigError(where(key) + ": expected a number in [" + fmt(lo) + ", " + fmt(hi) + "]");
    }
    out = v.get<double>();
  }

  void flag(const std::string& key, bool& out) {
    if (!take(key)) return;
    if (!j_.at(key).is_boolean()) throw ConfigError(where(key) + ": expected true or false");
    out = j_.at(key).get<bool>();
  }

  void text(const std::string& key, std::string& out) {
    if (!take(key)) return;
    if (!j_.at(key).is_string()) throw ConfigError(where(key) + ": expected a string");
    out = j_.at(key).get<std::string>();
  }

  template <std::size_t N>
  void reals(const std::string& key, std::array<double, N>& out) {
    if (!take(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_array() || v.size() != N) {
      throw ConfigError(where(key) + ": expected an array of " + std::to_string(N) + " numbers");
    }
    for (std::size_t i = 0; i < N; ++i) {
      if (!v[i].is_number()) throw ConfigError(where(key) + ": expected numbers");
      out[i] = v[i].get<double>();
    }
  }

  void texts(const std::string& key, std::vector<std::string>& out, const std::vector<std::string>& allowed) {
    if (!take(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_array() || v.empty()) throw ConfigError(where(key) + ": expected a non-empty array of strings");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_string()) throw ConfigError(where(key) + ": expected strings");
      const auto s = e.get<std::string>();
      if (std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
        throw ConfigError(where(key) + ": unknown entry '" + s + "'");
      }
      out.push_back(s);
    }
  }

  std::string where(const std::string& key) const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(where(it.key()) + ": unknown key");
    }
  }

 private:
  bool take(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  static std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_training(Fields f, TrainingBlock& t) {
  std::string opt = optimizer_name(t.optimizer);
  f.text("optimizer", opt);
  if (opt == "adam") {
    t.optimizer = OptimizerKind::adam;
  } else if (opt == "sgd") {
    t.optimizer = OptimizerKind::sgd_momentum;
  } else {
    throw ConfigError(f.where("optimizer") + ": expected 'sgd' or 'adam'");
  }
  f.real("learning_rate", t.learning_rate, 0.0, 10.0);
  f.real("momentum", t.momentum, 0.0, 0.9999);
  f.count("epochs", t.epochs);
  f.count("batch", t.batch);
  f.flag("cosine_decay", t.cosine_decay);
  f.finish();
}

json training_json(const TrainingBlock& t) {
  return {{"optimizer", optimizer_name(t.optimizer)}, {"learning_rate", t.learning_rate},
          {"momentum", t.momentum},                   {"epochs", t.epochs},
          {"batch", t.batch},                         {"cosine_decay", t.cosine_decay}};
}

void read_sine(Fields f, SineBlock& s) {
  f.reals("phases", s.phases);
  f.count("t_max", s.t_max, 3);
  f.finish();
}

json sine_json(const SineBlock& s) { return {{"phases", s.phases}, {"t_max", s.t_max}}; }

const std::vector<std::string> vdp_cases{"periodic", "quasi-periodic", "chaotic"};
const std::vector<std::string> lorenz_models{"easy_dense", "easy_sparse", "self", "lstm"};

}  // namespace

OptimizerConfig optimizer_config(const TrainingBlock& t) {
  OptimizerConfig c;
  c.kind = t.optimizer;
  c.learning_rate = t.learning_rate;
  c.momentum = t.momentum;
  return c;
}

TrainSpec train_spec(const TrainingBlock& t, std::uint64_t seed) {
  TrainSpec s;
  s.optimizer = optimizer_config(t);
  s.epochs = t.epochs;
  s.batch = t.batch;
  s.cosine_decay = t.cosine_decay;
  s.seed = seed;
  return s;
}

ExperimentConfig default_config(const std::string& experiment, Scale scale) {
  if (std::find(experiment_names().begin(), experiment_names().end(), experiment) == experiment_names().end()) {
    throw ConfigError("unknown experiment '" + experiment + "'");
  }
  ExperimentConfig c;
  c.experiment = experiment;
  c.scale = scale;
  if (scale == Scale::full) {
    c.vdp.cases = vdp_cases;
    c.vdp.steps = 10000;
    c.vdp.k = 0;
    c.vdp.training.epochs = 1000;

    c.lorenz.dataset.steps = 140000;
    c.lorenz.dataset.test_steps = 140000;
    c.lorenz.window_stride = 1;
    c.lorenz.training.epochs = 100;
    c.lorenz.training.cosine_decay = false;
  }
  c.lorenz.transformer.predict_increment = true;
  return c;
}

ExperimentConfig parse_config(const json& doc, const std::string& experiment, const Scale* scale_override) {
  Fields top(doc, "");
  std::string named = experiment;
  top.text("experiment", named);
  if (named != experiment) {
    throw ConfigError("experiment: file is for '" + named + "' but '" + experiment + "' was requested");
  }
  std::string scale_name = "desk";
  top.text("scale", scale_name);
  if (scale_name != "desk" && scale_name != "full") throw ConfigError("scale: expected 'desk' or 'full'");
  const Scale scale = scale_override ? *scale_override : (scale_name == "full" ? Scale::full : Scale::desk);

  ExperimentConfig c = default_config(experiment, scale);
  top.seed("seed", c.seed);
  top.text("out_dir", c.out_dir);

  if (experiment == "sine-recon") {
    read_sine(top.child("dataset"), c.sine.dataset);
    read_training(top.child("training"), c.sine.training);
    top.count("seeds", c.sine.seeds);
  } else if (experiment == "svd-analyze") {
    read_sine(top.child("dataset"), c.svd.dataset);
    read_training(top.child("training"), c.svd.training);
    top.text("checkpoint", c.svd.checkpoint);
    top.flag("train_inline", c.svd.train_inline);
  } else if (experiment == "vdp-recon") {
    auto& v = c.vdp;
    {
      Fields d = top.child("dataset");
      if (d.has("case")) {
        std::string name;
        d.text("case", name);
        if (name == "all") {
          v.cases = vdp_cases;
        } else if (std::find(vdp_cases.begin(), vdp_cases.end(), name) != vdp_cases.end()) {
          v.cases = {name};
        } else {
          throw ConfigError(d.where("case") + ": expected periodic, quasi-periodic, chaotic or all");
        }
      }
      d.count("steps", v.steps, 4);
      d.count("transient", v.transient, 0);
      d.real("dt", v.dt, 1e-6, 1.0);
      d.reals("initial", v.initial);
      d.finish();
    }
    {
      Fields s = top.child("spectral");
      s.count("k", v.k, 0);
      s.real("target_energy", v.target_energy, 1e-9, 100.0);
      s.count("input_cap", v.input_cap, 2);
      s.finish();
    }
    read_training(top.child("training"), v.training);
    if (v.training.optimizer != OptimizerKind::sgd_momentum || v.training.cosine_decay) {
      throw ConfigError("training: vdp-recon modules train with sgd and a constant learning rate");
    }
    std::vector<std::string> variants;
    top.texts("variants", variants, {"easy", "easy_dense", "self"});
    if (!variants.empty()) {
      v.variants.clear();
      for (const auto& n : variants) v.variants.push_back(parse_attention_variant(n));
    }
  } else {
    auto& l = c.lorenz;
    {
      Fields d = top.child("dataset");
      d.count("series", l.dataset.series, 2);
      d.count("train_series", l.dataset.train_series);
      d.count("steps", l.dataset.steps, 2);
      d.count("test_steps", l.dataset.test_steps, 2);
      d.count("transient", l.dataset.transient, 0);
      d.real("dt", l.dataset.dt, 1e-6, 1.0);
      std::array<double, 2> ic{l.dataset.ic_low, l.dataset.ic_high};
      d.reals("initial_range", ic);
      l.dataset.ic_low = ic[0];
      l.dataset.ic_high = ic[1];
      d.reals("test_initial", l.dataset.test_initial);
      d.count("window_stride", l.window_stride);
      d.flag("normalize", l.normalize);
      d.finish();
      if (l.dataset.train_series >= l.dataset.series) {
        throw ConfigError(d.where("train_series") + ": must be below dataset.series");
      }
    }
    {
      Fields m = top.child("model");
      auto& t = l.transformer;
      m.count("p", t.p);
      m.count("d_model", t.d_model);
      m.count("heads", t.heads);
      m.count("ffn_width", t.ffn_width);
      m.count("blocks", t.blocks);
      m.count("band_l", t.band_l, 0);
      m.flag("residual_norm", t.residual_norm);
      m.flag("predict_increment", t.predict_increment);
      m.count("lstm_hidden", l.lstm_hidden);
      m.finish();
      try {
        validate(t);
      } catch (const std::exception& e) {
        throw ConfigError(m.where("") + ": " + e.what());
      }
    }
    read_training(top.child("training"), l.training);
    {
      Fields e = top.child("evaluation");
      e.count("horizon", l.horizon);
      e.count("max_anchors", l.max_anchors, 0);
      e.count("rollout_steps", l.rollout_steps);
      e.finish();
    }
    top.texts("models", l.models, lorenz_models);
    top.count("repeats", l.repeats);
    top.flag("with_baselines", l.with_baselines);
  }
  top.finish();
  return c;
}

ExperimentConfig load_config(const std::string& path, const std::string& experiment, const Scale* scale_override) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config(doc, experiment, scale_override);
}

json ExperimentConfig::resolved() const {
  json j{{"experiment", experiment}, {"seed", seed}, {"scale", scale == Scale::full ? "full" : "desk"}};
  if (experiment == "sine-recon") {
    j["dataset"] = sine_json(sine.dataset);
    j["training"] = training_json(sine.training);
    j["seeds"] = sine.seeds;
  } else if (experiment == "svd-analyze") {
    j["dataset"] = sine_json(svd.dataset);
    j["training"] = training_json(svd.training);
    j["checkpoint"] = svd.checkpoint;
    j["train_inline"] = svd.train_inline;
  } else if (experiment == "vdp-recon") {
    json variants = json::array();
    for (auto v : vdp.variants) variants.push_back(to_string(v));
    j["dataset"] = {{"cases", vdp.cases}, {"steps", vdp.steps}, {"transient", vdp.transient},
                    {"dt", vdp.dt},       {"initial", vdp.initial}};
    j["spectral"] = {{"k", vdp.k}, {"target_energy", vdp.target_energy}, {"input_cap", vdp.input_cap}};
    j["training"] = training_json(vdp.training);
    j["variants"] = variants;
  } else {
    const auto& d = lorenz.dataset;
    const auto& t = lorenz.transformer;
    j["dataset"] = {{"series", d.series},
                    {"train_series", d.train_series},
                    {"steps", d.steps},
                    {"test_steps", d.test_steps},
                    {"transient", d.transient},
                    {"dt", d.dt},
                    {"initial_range", {d.ic_low, d.ic_high}},
                    {"test_initial", d.test_initial},
                    {"window_stride", lorenz.window_stride},
                    {"normalize", lorenz.normalize}};
    j["model"] = {{"p", t.p},
                  {"d_model", t.d_model},
                  {"heads", t.heads},
                  {"ffn_width", t.ffn_width},
                  {"blocks", t.blocks},
                  {"band_l", t.band_l},
                  {"residual_norm", t.residual_norm},
                  {"predict_increment", t.predict_increment},
                  {"lstm_hidden", lorenz.lstm_hidden}};
    j["training"] = training_json(lorenz.training);
    j["evaluation"] = {{"horizon", lorenz.horizon},
                       {"max_anchors", lorenz.max_anchors},
                       {"rollout_steps", lorenz.rollout_steps}};
    j["models"] = lorenz.models;
    j["repeats"] = lorenz.repeats;
    j["with_baselines"] = lorenz.with_baselines;
  }
  return j;
}

std::string ExperimentConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(resolved().dump())));
  return buf;
}

}  // namespace eal
