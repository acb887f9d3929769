#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "eal/tensor.hpp"

namespace eal {

using State = std::vector<double>;
using Rhs = std::function<State(double t, const State& x)>;

struct Trajectory {
  double t0 = 0.0;
  double dt = 0.01;
  std::size_t dim = 0;
  std::vector<double> states;  // row-major [T, dim]
  std::string system;

  std::size_t length() const { return dim ? states.size() / dim : 0; }
  double time(std::size_t i) const { return t0 + dt * static_cast<double>(i); }
  State row(std::size_t i) const;
  double at(std::size_t i, std::size_t j) const { return states[i * dim + j]; }
  // Single feature as a series.
  std::vector<double> column(std::size_t j) const;
  // Drops the first `count` rows, keeping the time origin consistent.
  Trajectory tail(std::size_t count) const;
};

class IntegrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

State rk4_step(const Rhs& f, double t, const State& x, double dt);
// `steps` + 1 rows; throws IntegrationError naming the first non-finite step.
Trajectory rk4_integrate(const Rhs& f, State x0, double t0, double dt, std::size_t steps);

struct LorenzParams {
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 8.0 / 3.0;
};

struct VdpParams {
  double a = 5.0;
  double b = 40.0;
  double omega = 7.0;
};

std::array<double, 3> lorenz_rhs(const std::array<double, 3>& s, const LorenzParams& p);
std::array<double, 2> vdp_rhs(const std::array<double, 2>& s, double t, const VdpParams& p);
Rhs lorenz_system(const LorenzParams& p);
Rhs vdp_system(const VdpParams& p);

// Named forcing regimes: "periodic", "quasi-periodic", "chaotic".
VdpParams vdp_case(const std::string& name);

// Phase-shifted sine waves y_i(t) = sin(t*pi/2 + b_i).
struct SineDataset {
  std::array<double, 3> phases{0.0, 1.0, 3.0};
  std::size_t t_max = 50;

  double value(std::size_t feature, double t) const;
  // Rows t-2, t-1, t of the three waves, t in [2, t_max].
  Tensor input(std::size_t t) const;
  std::size_t first() const { return 2; }
  std::size_t last() const { return t_max; }
};

struct WindowedDataset {
  std::size_t p = 0;
  std::size_t d = 0;
  std::vector<double> inputs;   // [N, p, d]
  std::vector<double> targets;  // [N, d]
  std::string split;

  std::size_t size() const { return d ? targets.size() / d : 0; }
  void append(const WindowedDataset& other);
  // Windows for the given sample indices, stacked [B*p, d], and their targets [B, d].
  Tensor batch_inputs(const std::vector<std::size_t>& idx) const;
  Tensor batch_targets(const std::vector<std::size_t>& idx) const;
};

// Standard deviation per feature of the one-step differences target - last row.
std::vector<double> increment_spread(const WindowedDataset& data);

// Stride-1 sliding windows; window i covers rows [i, i+p) and targets row i+p.
// A stride above 1 keeps every stride-th window.
WindowedDataset window(const Trajectory& traj, std::size_t p, const std::string& split = "train",
                       std::size_t stride = 1);

struct Normalizer {
  std::vector<double> mean;
  std::vector<double> stddev;

  static Normalizer fit(const std::vector<Trajectory>& series);
  static Normalizer identity(std::size_t d);
  Trajectory apply(const Trajectory& t) const;
  void apply_row(std::span<double> row) const;
  void invert_row(std::span<double> row) const;
};

struct LorenzCorpusConfig {
  LorenzParams params;
  std::size_t series = 10;
  std::size_t steps = 20000;  // kept per series, after the transient
  std::size_t transient = 1000;
  double dt = 0.01;
  double ic_low = 0.0;
  double ic_high = 5.0;
  std::size_t train_series = 8;
  std::array<double, 3> test_initial{6.0, 6.0, 6.0};
  std::size_t test_steps = 20000;
  std::uint64_t seed = 0;
};

struct LorenzCorpus {
  std::vector<Trajectory> train;
  std::vector<Trajectory> validation;
  Trajectory test;
};

// Raw (unnormalized) series. Initial states are independent uniform draws.
LorenzCorpus lorenz_corpus(const LorenzCorpusConfig& c);

void write_trajectory_csv(const std::string& path, const Trajectory& t,
                          const std::vector<std::string>& columns);
Trajectory read_trajectory_csv(const std::string& path);

}  // namespace eal
