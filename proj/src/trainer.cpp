#include "eal/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <numeric>

#include "eal/ops.hpp"
#include "eal/parallel.hpp"
#include "eal/random.hpp"

namespace eal {

std::size_t worker_count() {
  if (const char* env = std::getenv("EAL_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<std::size_t>(n);
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void validate(const TrainSpec& spec) {
  if (spec.epochs == 0) throw std::invalid_argument("epochs must be at least 1");
  if (spec.batch == 0) throw std::invalid_argument("batch size must be at least 1");
  if (spec.optimizer.learning_rate < 0.0) throw std::invalid_argument("learning rate must be non-negative");
}

std::vector<Tensor> trainable(const std::vector<NamedTensor>& named) {
  std::vector<Tensor> out;
  out.reserve(named.size());
  for (const auto& n : named) out.push_back(n.value);
  return out;
}

TrainReport train_loop(const std::vector<Tensor>& params, std::size_t samples, const TrainSpec& spec,
                       const BatchLoss& loss_fn) {
  validate(spec);
  if (samples == 0) throw std::invalid_argument("training set is empty");
  const auto start = std::chrono::steady_clock::now();
  Optimizer opt(params, spec.optimizer);
  Rng rng(derive_seed(spec.seed, "shuffle"));
  std::vector<std::size_t> order(samples);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t per_epoch =
      spec.samples_per_epoch == 0 ? samples : std::min(samples, spec.samples_per_epoch);

  const std::size_t total_steps = spec.epochs * ((per_epoch + spec.batch - 1) / spec.batch);
  TrainReport report;
  for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < per_epoch; begin += spec.batch) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                         order.begin() + static_cast<std::ptrdiff_t>(
                                                             std::min(per_epoch, begin + spec.batch)));
      double value = 0.0;
      try {
        Tape tape;
        Tensor loss = loss_fn(idx);
        value = loss.item();
        tape.backward(loss);
      } catch (const NumericError& e) {
        throw TrainingError("non-finite values at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batches) + ": " + e.what());
      }
      if (spec.cosine_decay) {
        const double progress = static_cast<double>(report.steps) / static_cast<double>(total_steps);
        opt.set_learning_rate(spec.optimizer.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
      }
      opt.step();
      opt.zero_grad();
      total += value;
      ++batches;
      ++report.steps;
    }
    report.loss_curve.push_back(total / static_cast<double>(batches));
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

TrainReport train(const Forecaster& model, const WindowedDataset& data, const TrainSpec& spec) {
  if (data.p != model.window() || data.d != model.features()) {
    throw DimensionError("dataset windows [" + std::to_string(data.p) + "x" + std::to_string(data.d) +
                         "] do not fit model " + model.name());
  }
  return train_loop(trainable(model.parameters()), data.size(), spec, [&](const std::vector<std::size_t>& idx) {
    return mse_loss(model.forward(data.batch_inputs(idx), idx.size()), data.batch_targets(idx));
  });
}

std::size_t audit_params(const std::vector<NamedTensor>& params) {
  std::size_t total = 0;
  for (const auto& p : params) {
    if (p.value.requires_grad()) total += p.value.size();
  }
  return total;
}

std::size_t audit_params(const Forecaster& model) {
  const auto counted = audit_params(model.parameters());
  const auto formula = model.formula_param_count();
  if (counted != formula) {
    throw std::logic_error(model.name() + ": registered parameters sum to " + std::to_string(counted) +
                           " but the closed form gives " + std::to_string(formula));
  }
  return counted;
}

StepFn model_step(const Forecaster& model, const Normalizer& norm) {
  return [&model, norm](const std::vector<std::vector<State>>& windows) {
    const auto p = model.window(), d = model.features();
    std::vector<double> flat;
    flat.reserve(windows.size() * p * d);
    for (const auto& w : windows) {
      if (w.size() != p) throw DimensionError("window length does not match the model");
      for (const auto& row : w) {
        State r = row;
        norm.apply_row(r);
        flat.insert(flat.end(), r.begin(), r.end());
      }
    }
    const Tensor out = model.forward(Tensor({windows.size() * p, d}, std::move(flat)), windows.size());
    std::vector<State> next(windows.size());
    for (std::size_t b = 0; b < windows.size(); ++b) {
      next[b].assign(out.data().begin() + static_cast<std::ptrdiff_t>(b * d),
                     out.data().begin() + static_cast<std::ptrdiff_t>((b + 1) * d));
      norm.invert_row(next[b]);
    }
    return next;
  };
}

StepFn persistence_step() {
  return [](const std::vector<std::vector<State>>& windows) {
    std::vector<State> next;
    for (const auto& w : windows) next.push_back(w.back());
    return next;
  };
}

StepFn oracle_step(const Rhs& f, double dt) {
  // Autonomous systems only: the time argument is irrelevant to the step.
  return [f, dt](const std::vector<std::vector<State>>& windows) {
    std::vector<State> next;
    for (const auto& w : windows) next.push_back(rk4_step(f, 0.0, w.back(), dt));
    return next;
  };
}

namespace {

// Advances every window by one predicted row; false if any state is non-finite.
bool advance(const StepFn& step, std::vector<std::vector<State>>& windows, std::vector<State>& produced) {
  try {
    produced = step(windows);
  } catch (const NumericError&) {
    return false;
  }
  bool finite = true;
  for (std::size_t b = 0; b < windows.size(); ++b) {
    for (double v : produced[b]) finite = finite && std::isfinite(v);
    windows[b].erase(windows[b].begin());
    windows[b].push_back(produced[b]);
  }
  return finite;
}

}  // namespace

IntervalResult evaluate_interval(const StepFn& step, const Trajectory& test, std::size_t p, std::size_t horizon,
                                 std::size_t max_anchors) {
  if (horizon == 0 || p == 0) throw std::invalid_argument("horizon and window must be positive");
  if (test.length() < p + horizon) {
    throw DimensionError("test series of " + std::to_string(test.length()) + " rows is too short for p=" +
                         std::to_string(p) + " and a " + std::to_string(horizon) + "-step horizon");
  }
  IntervalResult result;
  for (std::size_t s = p; s + horizon <= test.length(); s += horizon) {
    if (max_anchors && result.anchors.size() == max_anchors) break;
    result.anchors.push_back(s);
  }
  std::vector<std::vector<State>> windows;
  for (auto s : result.anchors) {
    std::vector<State> w;
    for (std::size_t i = s - p; i < s; ++i) w.push_back(test.row(i));
    windows.push_back(std::move(w));
  }
  std::vector<double> err2(windows.size(), 0.0), ref2(windows.size(), 0.0);
  std::vector<State> produced;
  for (std::size_t k = 0; k < horizon; ++k) {
    if (!advance(step, windows, produced)) throw NumericError("rollout produced non-finite states at step " +
                                                             std::to_string(k));
    for (std::size_t b = 0; b < windows.size(); ++b) {
      const auto truth = test.row(result.anchors[b] + k);
      for (std::size_t j = 0; j < truth.size(); ++j) {
        err2[b] += (produced[b][j] - truth[j]) * (produced[b][j] - truth[j]);
        ref2[b] += truth[j] * truth[j];
      }
    }
  }
  double total = 0.0;
  for (std::size_t b = 0; b < windows.size(); ++b) {
    result.per_anchor.push_back(std::sqrt(err2[b] / ref2[b]) * 100.0);
    total += result.per_anchor.back();
  }
  result.error_percent = total / static_cast<double>(windows.size());
  return result;
}

RolloutResult rollout(const StepFn& step, const std::vector<State>& seed_window, std::size_t steps, double t0,
                      double dt) {
  if (steps == 0) throw std::invalid_argument("rollout needs at least one step");
  if (seed_window.empty()) throw std::invalid_argument("rollout needs a seed window");
  RolloutResult r;
  r.trajectory.t0 = t0;
  r.trajectory.dt = dt;
  r.trajectory.dim = seed_window.front().size();
  std::vector<std::vector<State>> windows{seed_window};
  std::vector<State> produced;
  for (std::size_t k = 0; k < steps; ++k) {
    const bool finite = advance(step, windows, produced);
    if (!finite) {
      r.truncated = true;
      break;
    }
    r.trajectory.states.insert(r.trajectory.states.end(), produced[0].begin(), produced[0].end());
  }
  return r;
}

}  // namespace eal
