#include "eal/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "eal/ops.hpp"
#include "eal/parallel.hpp"
#include "eal/trainer.hpp"

namespace eal {

namespace {

std::size_t unit_of(std::size_t k, std::size_t m) { return k <= m / 2 ? k : m - k; }

bool is_self_conjugate(std::size_t k, std::size_t m) { return k == 0 || 2 * k == m; }

double norm2(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

}  // namespace

std::vector<std::size_t> SpectralDecomposition::ranked_units() const {
  std::vector<std::size_t> units = all_units(m);
  std::stable_sort(units.begin(), units.end(),
                   [&](std::size_t a, std::size_t b) { return amplitude[a] > amplitude[b]; });
  return units;
}

std::vector<std::size_t> all_units(std::size_t m) {
  std::vector<std::size_t> units(m / 2 + 1);
  std::iota(units.begin(), units.end(), 0);
  return units;
}

SpectralDecomposition dft(const std::vector<double>& signal) {
  if (signal.empty()) throw std::invalid_argument("cannot transform an empty signal");
  const auto m = signal.size();
  SpectralDecomposition s;
  s.m = m;
  s.amplitude.resize(m);
  s.phase.resize(m);
  s.frequency.resize(m);
  for (std::size_t k = 0; k < m; ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t t = 0; t < m; ++t) {
      // Reducing k*t mod M keeps the angle small and accurate.
      const double angle = 2.0 * std::numbers::pi * static_cast<double>((k * t) % m) / static_cast<double>(m);
      re += signal[t] * std::cos(angle);
      im -= signal[t] * std::sin(angle);
    }
    s.amplitude[k] = std::hypot(re, im);
    s.phase[k] = std::atan2(im, re);
    s.frequency[k] = static_cast<double>(k) / static_cast<double>(m);
  }
  return s;
}

std::vector<double> component_wave(const SpectralDecomposition& s, std::size_t k) {
  if (k >= s.m) throw std::out_of_range("bin " + std::to_string(k) + " outside [0, " + std::to_string(s.m) + ")");
  k = unit_of(k, s.m);
  const auto m = s.m;
  std::vector<double> w(m);
  const double scale = (is_self_conjugate(k, m) ? 1.0 : 2.0) * s.amplitude[k] / static_cast<double>(m);
  for (std::size_t t = 0; t < m; ++t) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>((k * t) % m) / static_cast<double>(m);
    w[t] = scale * std::cos(angle + s.phase[k]);
  }
  return w;
}

std::vector<double> idft(const SpectralDecomposition& s, const std::vector<std::size_t>& keep) {
  std::vector<double> out(s.m, 0.0);
  std::vector<bool> used(s.m / 2 + 1, false);
  for (auto k : keep) {
    const auto u = unit_of(k, s.m);
    if (used[u]) continue;
    used[u] = true;
    const auto w = component_wave(s, u);
    for (std::size_t t = 0; t < s.m; ++t) out[t] += w[t];
  }
  return out;
}

double component_period(const SpectralDecomposition& s, std::size_t k) {
  if (k >= s.m) throw std::out_of_range("bin out of range");
  k = unit_of(k, s.m);
  if (k == 0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(s.m) / static_cast<double>(k);
}

std::size_t module_input_size(double period, std::size_t cap) {
  if (!std::isfinite(period)) return 2;
  const auto n = static_cast<std::size_t>(std::ceil(period - 1e-9));
  return std::max<std::size_t>(2, std::min(n, cap));
}

double rel_l2(const std::vector<double>& reference, const std::vector<double>& approx) {
  if (reference.size() != approx.size()) throw DimensionError("rel_l2 needs equal lengths");
  const double ref = norm2(reference);
  if (ref == 0.0) throw std::invalid_argument("relative error against a zero-norm reference");
  double err = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) err += (reference[i] - approx[i]) * (reference[i] - approx[i]);
  return std::sqrt(err) / ref;
}

double reconstruction_energy(const std::vector<double>& reference, const std::vector<double>& approx) {
  return (1.0 - rel_l2(reference, approx)) * 100.0;
}

std::size_t select_top_k(SpectralDecomposition& s, const std::vector<double>& signal, double target_energy) {
  if (!(target_energy > 0.0 && target_energy <= 100.0)) {
    throw std::invalid_argument("target energy must lie in (0, 100]");
  }
  const auto ranked = s.ranked_units();
  std::vector<double> partial(s.m, 0.0);
  s.top_k.clear();
  for (auto u : ranked) {
    const auto w = component_wave(s, u);
    for (std::size_t t = 0; t < s.m; ++t) partial[t] += w[t];
    s.top_k.push_back(u);
    // Tiny slack absorbs rounding when the full set should give exactly 100.
    if (reconstruction_energy(signal, partial) >= target_energy - 1e-9) return s.top_k.size();
  }
  return s.top_k.size();
}

void select_top_k_fixed(SpectralDecomposition& s, std::size_t k) {
  const auto ranked = s.ranked_units();
  if (k == 0 || k > ranked.size()) {
    throw std::invalid_argument("K=" + std::to_string(k) + " outside [1, " + std::to_string(ranked.size()) + "]");
  }
  s.top_k.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k));
}

namespace {

ComponentResult train_component(const SpectralDecomposition& spectrum, std::size_t bin,
                                 const ReconstructionConfig& config) {
  ComponentResult r;
  r.bin = bin;
  r.period = component_period(spectrum, bin);
  r.input_size = module_input_size(r.period, config.input_cap);
  const auto m = spectrum.m;
  const auto wave = component_wave(spectrum, bin);
  r.amplitude = (is_self_conjugate(bin, m) ? 1.0 : 2.0) * spectrum.amplitude[bin] / static_cast<double>(m);
  if (r.amplitude == 0.0) {
    r.learned.assign(m, 0.0);
    return r;
  }
  std::vector<double> unit(m);
  for (std::size_t t = 0; t < m; ++t) unit[t] = wave[t] / r.amplitude;

  const auto n = r.input_size;
  // Window t holds samples t-n .. t-1 (circular); its target is shifted by one
  // so the last target row is sample t.
  auto gather = [&](const std::vector<std::size_t>& idx, std::size_t shift) {
    std::vector<double> v;
    v.reserve(idx.size() * n);
    for (auto t : idx) {
      for (std::size_t j = 0; j < n; ++j) v.push_back(unit[(t + m * n - n + j + shift) % m]);
    }
    return Tensor({idx.size() * n, 1}, std::move(v));
  };

  AttentionConfig ac;
  ac.variant = config.variant;
  ac.n = n;
  ac.d = 1;
  ac.heads = 1;
  Rng rng(derive_seed(config.seed, "component-init-" + std::to_string(bin)));
  const Attention module(ac, rng);

  TrainSpec spec;
  spec.optimizer.kind = OptimizerKind::sgd_momentum;
  spec.optimizer.learning_rate = config.learning_rate;
  spec.optimizer.momentum = config.momentum;
  spec.epochs = config.epochs;
  spec.batch = config.batch;
  spec.seed = derive_seed(config.seed, "component-shuffle-" + std::to_string(bin));
  try {
    auto report = train_loop(trainable(module.parameters()), m, spec, [&](const std::vector<std::size_t>& idx) {
      return mse_loss(module.forward(gather(idx, 0), idx.size()), gather(idx, 1));
    });
    r.loss_curve = std::move(report.loss_curve);
  } catch (const TrainingError& e) {
    r.diverged = true;
    r.message = e.what();
    r.error = 1.0;
    r.learned.assign(m, 0.0);
    return r;
  }

  std::vector<std::size_t> all(m);
  std::iota(all.begin(), all.end(), 0);
  const Tensor pred = module.forward(gather(all, 0), m);
  std::vector<double> learned_unit(m);
  for (std::size_t t = 0; t < m; ++t) learned_unit[t] = pred.data()[t * n + n - 1];
  r.error = rel_l2(unit, learned_unit);
  r.learned.resize(m);
  for (std::size_t t = 0; t < m; ++t) r.learned[t] = r.amplitude * learned_unit[t];
  return r;
}

}  // namespace

ReconstructionResult multi_attention_reconstruct(const std::vector<double>& signal,
                                                 const SpectralDecomposition& spectrum,
                                                 const ReconstructionConfig& config, std::size_t threads) {
  if (spectrum.top_k.empty()) throw std::invalid_argument("no spectral components selected (K must be >= 1)");
  if (signal.size() != spectrum.m) throw DimensionError("signal and spectrum lengths differ");
  ReconstructionResult result;
  result.components.resize(spectrum.top_k.size());
  parallel_for(spectrum.top_k.size(), threads, [&](std::size_t i) {
    result.components[i] = train_component(spectrum, spectrum.top_k[i], config);
  });
  result.reconstruction.assign(spectrum.m, 0.0);
  for (const auto& c : result.components) {
    for (std::size_t t = 0; t < spectrum.m; ++t) result.reconstruction[t] += c.learned[t];
    result.mean_error += c.error;
    AttentionConfig ac;
    ac.variant = config.variant;
    ac.n = c.input_size;
    ac.d = 1;
    result.parameters += attention_param_count(ac);
  }
  result.mean_error /= static_cast<double>(result.components.size());
  result.energy = reconstruction_energy(signal, result.reconstruction);
  result.oracle_energy = reconstruction_energy(signal, idft(spectrum, spectrum.top_k));
  return result;
}

std::vector<double> Svd::reconstruct() const {
  std::vector<double> a(rows * cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      double acc = 0.0;
      for (std::size_t r = 0; r < rank; ++r) acc += u[i * rank + r] * s[r] * v[j * rank + r];
      a[i * cols + j] = acc;
    }
  }
  return a;
}

namespace {

// Fills zero columns of q [rows, cols] with unit vectors orthogonal to the rest.
void complete_basis(std::vector<double>& q, std::size_t rows, std::size_t cols, const std::vector<bool>& valid) {
  std::size_t candidate = 0;
  for (std::size_t c = 0; c < cols; ++c) {
    if (valid[c]) continue;
    while (candidate < rows) {
      std::vector<double> e(rows, 0.0);
      e[candidate++] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t o = 0; o < cols; ++o) {
          if (o == c || (!valid[o] && o > c)) continue;
          double dot = 0.0;
          for (std::size_t i = 0; i < rows; ++i) dot += e[i] * q[i * cols + o];
          for (std::size_t i = 0; i < rows; ++i) e[i] -= dot * q[i * cols + o];
        }
      }
      const double nrm = norm2(e);
      if (nrm > 1e-8) {
        for (std::size_t i = 0; i < rows; ++i) q[i * cols + c] = e[i] / nrm;
        break;
      }
    }
  }
}

}  // namespace

Svd svd(const std::vector<double>& a, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0 || a.size() != rows * cols) throw DimensionError("svd: bad matrix dimensions");
  for (double x : a) {
    if (!std::isfinite(x)) throw NumericError("svd of a matrix with non-finite entries");
  }
  if (rows < cols) {
    std::vector<double> at(cols * rows);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) at[j * rows + i] = a[i * cols + j];
    }
    Svd t = svd(at, cols, rows);
    std::swap(t.u, t.v);
    std::swap(t.rows, t.cols);
    return t;
  }
  const auto m = rows, n = cols;
  std::vector<double> w = a;  // columns converge to U * Sigma
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  const double eps = std::numeric_limits<double>::epsilon();
  double frob2 = 0.0;
  for (double x : a) frob2 += x * x;
  // Columns this small are numerically zero; rotating them never settles.
  const double negligible = eps * eps * frob2;
  bool converged = false;
  for (int sweep = 0; sweep < 100 && !converged; ++sweep) {
    converged = true;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          alpha += w[i * n + p] * w[i * n + p];
          beta += w[i * n + q] * w[i * n + q];
          gamma += w[i * n + p] * w[i * n + q];
        }
        if (gamma == 0.0 || std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
        if (std::min(alpha, beta) <= negligible) continue;
        converged = false;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t), s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double wp = w[i * n + p], wq = w[i * n + q];
          w[i * n + p] = c * wp - s * wq;
          w[i * n + q] = s * wp + c * wq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v[i * n + p], vq = v[i * n + q];
          v[i * n + p] = c * vp - s * vq;
          v[i * n + q] = s * vp + c * vq;
        }
      }
    }
  }
  if (!converged) throw NumericError("svd: Jacobi sweeps did not converge");

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s2 = 0.0;
    for (std::size_t i = 0; i < m; ++i) s2 += w[i * n + j] * w[i * n + j];
    sigma[j] = std::sqrt(s2);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  Svd out;
  out.rows = m;
  out.cols = n;
  out.rank = n;
  out.u.assign(m * n, 0.0);
  out.v.assign(n * n, 0.0);
  out.s.resize(n);
  const double tiny = (sigma[order[0]] > 0.0 ? sigma[order[0]] : 1.0) * eps * static_cast<double>(m);
  std::vector<bool> valid(n, false);
  for (std::size_t r = 0; r < n; ++r) {
    const auto j = order[r];
    out.s[r] = sigma[j];
    for (std::size_t i = 0; i < n; ++i) out.v[i * n + r] = v[i * n + j];
    if (sigma[j] > tiny) {
      valid[r] = true;
      for (std::size_t i = 0; i < m; ++i) out.u[i * n + r] = w[i * n + j] / sigma[j];
    }
  }
  complete_basis(out.u, m, n, valid);
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < m; ++i) {
      if (std::abs(out.u[i * n + r]) > std::abs(out.u[arg * n + r])) arg = i;
    }
    if (out.u[arg * n + r] < 0.0) {
      for (std::size_t i = 0; i < m; ++i) out.u[i * n + r] = -out.u[i * n + r];
      for (std::size_t i = 0; i < n; ++i) out.v[i * n + r] = -out.v[i * n + r];
    }
  }
  return out;
}

SvdReport svd_analyze(const SineDataset& data, const Attention& attn) {
  const auto& c = attn.config();
  if (c.variant != AttentionVariant::self || c.heads != 1 || c.n != 3 || c.d != 3) {
    throw std::invalid_argument("svd analysis expects a single-head 3x3 self-attention module");
  }
  const std::size_t d = 3;
  const double inv_sqrt_k = 1.0 / std::sqrt(static_cast<double>(d));
  // W_q W_k^T
  std::vector<double> wqk(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      for (std::size_t l = 0; l < d; ++l) wqk[i * d + j] += attn.w_q.at(i, l) * attn.w_k.at(j, l);
    }
  }

  SvdReport report;
  report.combination.name = "self_combination";
  report.weighted.name = "weighted";
  report.score.name = "softmax_score";
  auto analyze = [&](SvdFamily& family, std::vector<Svd>& slot, const std::vector<double>& matrix,
                     std::size_t time) {
    try {
      Svd s = svd(matrix, d, d);
      const auto rec = s.reconstruct();
      for (std::size_t i = 0; i < rec.size(); ++i) {
        family.max_reconstruction_error = std::max(family.max_reconstruction_error, std::abs(rec[i] - matrix[i]));
      }
      slot.push_back(std::move(s));
    } catch (const std::exception& e) {
      report.failures.push_back(family.name + " at t=" + std::to_string(time) + ": " + e.what());
      slot.push_back(Svd{});
    }
  };

  for (std::size_t t = data.first(); t <= data.last(); ++t) {
    const Tensor y = data.input(t);
    std::vector<Svd> comb, weigh, score;
    for (std::size_t r = 0; r < d; ++r) {
      std::vector<double> outer(d * d), w(d * d, 0.0), sm(d * d);
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) outer[i * d + j] = y.at(r, i) * y.at(r, j);
      }
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
          for (std::size_t l = 0; l < d; ++l) w[i * d + j] += wqk[i * d + l] * outer[l * d + j];
        }
      }
      sm = softmax_rows(scale(Tensor({d, d}, w), inv_sqrt_k)).values();
      analyze(report.combination, comb, outer, t);
      analyze(report.weighted, weigh, w, t);
      analyze(report.score, score, sm, t);
    }
    report.combination.samples.push_back(std::move(comb));
    report.weighted.samples.push_back(std::move(weigh));
    report.score.samples.push_back(std::move(score));

    Tensor scores;
    attn.forward(y, 1, &scores);
    std::vector<double> diag(d);
    for (std::size_t i = 0; i < d; ++i) diag[i] = scores.data()[i * d + i];
    report.alpha_diagonal.push_back(std::move(diag));
    report.times.push_back(t);
  }
  return report;
}

}  // namespace eal
