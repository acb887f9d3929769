#include "eal/dynsys.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "eal/random.hpp"

namespace eal {

State Trajectory::row(std::size_t i) const {
  return State(states.begin() + static_cast<std::ptrdiff_t>(i * dim),
               states.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
}

std::vector<double> Trajectory::column(std::size_t j) const {
  std::vector<double> c(length());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = at(i, j);
  return c;
}

Trajectory Trajectory::tail(std::size_t count) const {
  if (count >= length()) throw DimensionError("cannot drop " + std::to_string(count) + " of " +
                                              std::to_string(length()) + " rows");
  Trajectory t = *this;
  t.t0 = time(count);
  t.states.erase(t.states.begin(), t.states.begin() + static_cast<std::ptrdiff_t>(count * dim));
  return t;
}

State rk4_step(const Rhs& f, double t, const State& x, double dt) {
  const auto n = x.size();
  auto shifted = [&](const State& k, double h) {
    State y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + h * k[i];
    return y;
  };
  const State k1 = f(t, x);
  const State k2 = f(t + 0.5 * dt, shifted(k1, 0.5 * dt));
  const State k3 = f(t + 0.5 * dt, shifted(k2, 0.5 * dt));
  const State k4 = f(t + dt, shifted(k3, dt));
  State y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  return y;
}

Trajectory rk4_integrate(const Rhs& f, State x0, double t0, double dt, std::size_t steps) {
  Trajectory traj;
  traj.t0 = t0;
  traj.dt = dt;
  traj.dim = x0.size();
  traj.states.reserve((steps + 1) * traj.dim);
  traj.states.insert(traj.states.end(), x0.begin(), x0.end());
  State x = std::move(x0);
  for (std::size_t s = 1; s <= steps; ++s) {
    x = rk4_step(f, t0 + dt * static_cast<double>(s - 1), x, dt);
    for (double v : x) {
      if (!std::isfinite(v)) throw IntegrationError("integration blew up at step " + std::to_string(s));
    }
    traj.states.insert(traj.states.end(), x.begin(), x.end());
  }
  return traj;
}

std::array<double, 3> lorenz_rhs(const std::array<double, 3>& s, const LorenzParams& p) {
  return {p.sigma * (s[1] - s[0]), s[0] * (p.rho - s[2]) - s[1], s[0] * s[1] - p.beta * s[2]};
}

std::array<double, 2> vdp_rhs(const std::array<double, 2>& s, double t, const VdpParams& p) {
  return {s[1], -s[0] + p.a * (1.0 - s[0] * s[0]) * s[1] + p.b * std::cos(p.omega * t)};
}

Rhs lorenz_system(const LorenzParams& p) {
  return [p](double, const State& x) {
    const auto r = lorenz_rhs({x[0], x[1], x[2]}, p);
    return State(r.begin(), r.end());
  };
}

Rhs vdp_system(const VdpParams& p) {
  return [p](double t, const State& x) {
    const auto r = vdp_rhs({x[0], x[1]}, t, p);
    return State(r.begin(), r.end());
  };
}

VdpParams vdp_case(const std::string& name) {
  if (name == "periodic") return {5.0, 40.0, 7.0};
  if (name == "quasi-periodic") return {5.0, 15.0, 7.0};
  if (name == "chaotic") return {5.0, 3.0, 1.788};
  throw std::invalid_argument("unknown Van der Pol case '" + name + "'");
}

double SineDataset::value(std::size_t feature, double t) const {
  return std::sin(t * std::numbers::pi / 2.0 + phases.at(feature));
}

Tensor SineDataset::input(std::size_t t) const {
  if (t < 2 || t > t_max) throw DimensionError("sine window end " + std::to_string(t) + " out of range");
  std::vector<double> v(9);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 3; ++c) v[r * 3 + c] = value(c, static_cast<double>(t - 2 + r));
  }
  return Tensor({3, 3}, std::move(v));
}

void WindowedDataset::append(const WindowedDataset& other) {
  if (size() == 0 && p == 0) {
    p = other.p;
    d = other.d;
  }
  if (other.p != p || other.d != d) throw DimensionError("cannot merge datasets of different window shapes");
  inputs.insert(inputs.end(), other.inputs.begin(), other.inputs.end());
  targets.insert(targets.end(), other.targets.begin(), other.targets.end());
}

Tensor WindowedDataset::batch_inputs(const std::vector<std::size_t>& idx) const {
  std::vector<double> v;
  v.reserve(idx.size() * p * d);
  for (auto i : idx) {
    const auto* src = inputs.data() + i * p * d;
    v.insert(v.end(), src, src + p * d);
  }
  return Tensor({idx.size() * p, d}, std::move(v));
}

Tensor WindowedDataset::batch_targets(const std::vector<std::size_t>& idx) const {
  std::vector<double> v;
  v.reserve(idx.size() * d);
  for (auto i : idx) v.insert(v.end(), targets.data() + i * d, targets.data() + (i + 1) * d);
  return Tensor({idx.size(), d}, std::move(v));
}

WindowedDataset window(const Trajectory& traj, std::size_t p, const std::string& split, std::size_t stride) {
  if (p == 0 || stride == 0) throw DimensionError("window length and stride must be positive");
  if (p >= traj.length()) {
    throw DimensionError("window length " + std::to_string(p) + " needs a trajectory longer than " +
                         std::to_string(traj.length()) + " rows");
  }
  WindowedDataset ds;
  ds.p = p;
  ds.d = traj.dim;
  ds.split = split;
  const auto d = traj.dim;
  for (std::size_t i = 0; i + p < traj.length(); i += stride) {
    ds.inputs.insert(ds.inputs.end(), traj.states.begin() + static_cast<std::ptrdiff_t>(i * d),
                     traj.states.begin() + static_cast<std::ptrdiff_t>((i + p) * d));
    ds.targets.insert(ds.targets.end(), traj.states.begin() + static_cast<std::ptrdiff_t>((i + p) * d),
                      traj.states.begin() + static_cast<std::ptrdiff_t>((i + p + 1) * d));
  }
  return ds;
}

std::vector<double> increment_spread(const WindowedDataset& data) {
  const auto n = data.size(), d = data.d, p = data.p;
  if (n == 0) throw DimensionError("increment spread of an empty dataset");
  std::vector<double> mean(d, 0.0), sq(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = data.targets[i * d + j] - data.inputs[(i * p + p - 1) * d + j];
      mean[j] += diff;
      sq[j] += diff * diff;
    }
  }
  std::vector<double> spread(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double m = mean[j] / static_cast<double>(n);
    spread[j] = std::sqrt(std::max(0.0, sq[j] / static_cast<double>(n) - m * m));
    if (spread[j] == 0.0) spread[j] = 1.0;
  }
  return spread;
}

Normalizer Normalizer::fit(const std::vector<Trajectory>& series) {
  if (series.empty()) throw DimensionError("normalizer needs at least one series");
  const auto d = series.front().dim;
  Normalizer n;
  n.mean.assign(d, 0.0);
  n.stddev.assign(d, 0.0);
  double count = 0.0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.length(); ++i) {
      for (std::size_t j = 0; j < d; ++j) n.mean[j] += s.at(i, j);
    }
    count += static_cast<double>(s.length());
  }
  for (auto& m : n.mean) m /= count;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.length(); ++i) {
      for (std::size_t j = 0; j < d; ++j) n.stddev[j] += (s.at(i, j) - n.mean[j]) * (s.at(i, j) - n.mean[j]);
    }
  }
  for (auto& v : n.stddev) {
    v = std::sqrt(v / count);
    if (v == 0.0) v = 1.0;
  }
  return n;
}

Normalizer Normalizer::identity(std::size_t d) { return {std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)}; }

Trajectory Normalizer::apply(const Trajectory& t) const {
  Trajectory out = t;
  for (std::size_t i = 0; i < out.length(); ++i) {
    apply_row(std::span<double>(out.states.data() + i * out.dim, out.dim));
  }
  return out;
}

void Normalizer::apply_row(std::span<double> row) const {
  for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mean[j]) / stddev[j];
}

void Normalizer::invert_row(std::span<double> row) const {
  for (std::size_t j = 0; j < row.size(); ++j) row[j] = row[j] * stddev[j] + mean[j];
}

LorenzCorpus lorenz_corpus(const LorenzCorpusConfig& c) {
  if (c.train_series == 0 || c.train_series >= c.series) {
    throw std::invalid_argument("train_series must lie in [1, series)");
  }
  const Rhs f = lorenz_system(c.params);
  Rng rng(derive_seed(c.seed, "lorenz-initial-states"));
  LorenzCorpus corpus;
  for (std::size_t s = 0; s < c.series; ++s) {
    State x0(3);
    for (auto& v : x0) v = rng.uniform(c.ic_low, c.ic_high);
    Trajectory t = rk4_integrate(f, x0, 0.0, c.dt, c.transient + c.steps - 1).tail(c.transient);
    t.system = "lorenz";
    (s < c.train_series ? corpus.train : corpus.validation).push_back(std::move(t));
  }
  State x0(c.test_initial.begin(), c.test_initial.end());
  corpus.test = rk4_integrate(f, x0, 0.0, c.dt, c.transient + c.test_steps - 1).tail(c.transient);
  corpus.test.system = "lorenz";
  return corpus;
}

void write_trajectory_csv(const std::string& path, const Trajectory& t,
                          const std::vector<std::string>& columns) {
  if (columns.size() != t.dim) throw DimensionError("column names do not match trajectory width");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "t";
  for (const auto& c : columns) out << ',' << c;
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < t.length(); ++i) {
    out << t.time(i);
    for (std::size_t j = 0; j < t.dim; ++j) out << ',' << t.at(i, j);
    out << '\n';
  }
}

Trajectory read_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(in, line);
  Trajectory t;
  t.dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  std::vector<double> times;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    times.push_back(std::stod(cell));
    while (std::getline(row, cell, ',')) t.states.push_back(std::stod(cell));
  }
  if (times.size() < 2 || t.states.size() != times.size() * t.dim) {
    throw std::runtime_error(path + " is not a uniformly sampled trajectory");
  }
  t.t0 = times[0];
  t.dt = times[1] - times[0];
  return t;
}

}  // namespace eal
