#pragma once

#include <functional>
#include <string>
#include <vector>

#include "eal/dynsys.hpp"
#include "eal/models.hpp"
#include "eal/optim.hpp"

namespace eal {

struct TrainSpec {
  OptimizerConfig optimizer;
  std::size_t epochs = 1;
  std::size_t batch = 32;
  // 0 uses every sample each epoch; otherwise a fresh random subset of this size.
  std::size_t samples_per_epoch = 0;
  std::uint64_t seed = 0;
  // Cosine decay of the learning rate to zero over all steps.
  bool cosine_decay = false;
};

void validate(const TrainSpec& spec);

struct TrainReport {
  std::vector<double> loss_curve;  // mean batch loss per epoch
  double seconds = 0.0;
  std::size_t steps = 0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using BatchLoss = std::function<Tensor(const std::vector<std::size_t>& indices)>;

// Shuffled mini-batch loop over `samples` indices. loss_fn builds the batch loss
// on the tape this loop opens for every step.
TrainReport train_loop(const std::vector<Tensor>& params, std::size_t samples, const TrainSpec& spec,
                       const BatchLoss& loss_fn);

std::vector<Tensor> trainable(const std::vector<NamedTensor>& named);

// Next-step regression for a forecaster on windowed data.
TrainReport train(const Forecaster& model, const WindowedDataset& data, const TrainSpec& spec);

// Sum of registered trainable scalars, checked against the model's closed form.
std::size_t audit_params(const std::vector<NamedTensor>& params);
std::size_t audit_params(const Forecaster& model);

// Predicts the next raw state for every window in a batch, [B*p, d] -> [B, d]
// in raw units. Implementations see raw (denormalized) windows.
using StepFn = std::function<std::vector<State>(const std::vector<std::vector<State>>& windows)>;

StepFn model_step(const Forecaster& model, const Normalizer& norm);
StepFn persistence_step();
// One RK4 step of the true system from the last state: reproduces the data.
StepFn oracle_step(const Rhs& f, double dt);

struct IntervalResult {
  double error_percent = 0.0;  // mean over anchors
  std::vector<double> per_anchor;
  std::vector<std::size_t> anchors;
};

// Anchors start at p and advance by `horizon`; every anchor rolls `horizon`
// steps autoregressively from the true window before it. Error per anchor is
// ||pred - true|| / ||true|| * 100 over the stacked state sequence.
IntervalResult evaluate_interval(const StepFn& step, const Trajectory& test, std::size_t p,
                                 std::size_t horizon = 512, std::size_t max_anchors = 0);

struct RolloutResult {
  Trajectory trajectory;
  bool truncated = false;  // a non-finite state stopped the rollout early
};

RolloutResult rollout(const StepFn& step, const std::vector<State>& seed_window, std::size_t steps,
                      double t0, double dt);

}  // namespace eal
