#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "eal/ops.hpp"
#include "eal/random.hpp"

namespace eal::testing {

// Norm-wise relative error between analytic and central-difference gradients,
// maximized over the given tensors.
inline double gradcheck(const std::vector<Tensor>& params, const std::function<Tensor()>& loss_fn,
                        double h = 1e-5) {
  for (auto p : params) p.zero_grad();
  {
    Tape tape;
    tape.backward(loss_fn());
  }
  double worst = 0.0;
  for (auto p : params) {
    const std::vector<double> analytic(p.grad().begin(), p.grad().end());
    std::vector<double> numeric(p.size());
    auto data = p.mutable_data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double keep = data[i];
      data[i] = keep + h;
      const double up = loss_fn().item();
      data[i] = keep - h;
      const double down = loss_fn().item();
      data[i] = keep;
      numeric[i] = (up - down) / (2.0 * h);
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      na += analytic[i] * analytic[i];
      nn += numeric[i] * numeric[i];
    }
    const double scale = std::max(std::sqrt(std::max(na, nn)), 1e-12);
    worst = std::max(worst, std::sqrt(diff) / scale);
  }
  return worst;
}

inline Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true, double lo = -1.0,
                            double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

// Scalar probe sum(out * weights) so every output entry contributes.
inline Tensor probe(const Tensor& out, const Tensor& weights) { return sum(hadamard(out, weights)); }

}  // namespace eal::testing
