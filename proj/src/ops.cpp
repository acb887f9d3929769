#include "eal/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace eal {

namespace {

using Storage = std::shared_ptr<detail::TensorStorage>;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::vector<double>& grad_of(detail::TensorStorage& s) {
  if (s.grad.empty()) s.grad.assign(s.values.size(), 0.0);
  return s.grad;
}

bool wants_grad(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::active()) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

Tensor make_output(Shape shape, std::vector<double> values, std::string_view op) {
  if (!all_finite(values)) throw NumericError("non-finite value produced by " + std::string(op));
  auto s = std::make_shared<detail::TensorStorage>();
  s->shape = std::move(shape);
  s->values = std::move(values);
  return Tensor(std::move(s));
}

void record(std::string_view op, std::vector<Storage> inputs, const Tensor& out, Tape::Rule rule) {
  Tape::active()->record(op, inputs, out.storage(), std::move(rule));
}

[[noreturn]] void mismatch(std::string_view op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) +
                       " and " + shape_string(b.shape()));
}

void require_rank(std::string_view op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
  }
}

template <typename Fwd, typename Deriv>
Tensor unary(std::string_view op, const Tensor& x, Fwd fwd, Deriv deriv) {
  std::vector<double> v(x.size());
  const auto xs = x.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = fwd(xs[i]);
  Tensor out = make_output(x.shape(), std::move(v), op);
  if (wants_grad({&x})) {
    auto xs_ = x.storage();
    auto os = out.storage();
    record(op, {xs_}, out, [xs_, os, deriv](std::span<const double> g) {
      if (!xs_->requires_grad) return;
      auto& gx = grad_of(*xs_);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(xs_->values[i], os->values[i]);
    });
  }
  return out;
}

struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) mismatch("matmul", a, b);
  std::vector<double> c(m * n);
  MutMap(c.data(), m, n).noalias() = ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), k, n);
  Tensor out = make_output({m, n}, std::move(c), "matmul");
  if (wants_grad({&a, &b})) {
    auto as = a.storage(), bs = b.storage();
    record("matmul", {as, bs}, out, [as, bs, m, k, n](std::span<const double> g) {
      ConstMap gc(g.data(), m, n);
      if (as->requires_grad) {
        MutMap(grad_of(*as).data(), m, k).noalias() += gc * ConstMap(bs->values.data(), k, n).transpose();
      }
      if (bs->requires_grad) {
        MutMap(grad_of(*bs).data(), k, n).noalias() += ConstMap(as->values.data(), m, k).transpose() * gc;
      }
    });
  }
  return out;
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  require_rank("bmm", a, 3);
  require_rank("bmm", b, 3);
  const auto groups = b.dim(0);
  const bool broadcast_a = a.dim(0) == 1 && groups > 1;
  if (!broadcast_a && a.dim(0) != groups) mismatch("bmm", a, b);
  const auto m = a.dim(1), k = a.dim(2);
  const auto bk = transpose_b ? b.dim(2) : b.dim(1);
  const auto n = transpose_b ? b.dim(1) : b.dim(2);
  if (bk != k) mismatch("bmm", a, b);

  std::vector<double> c(groups * m * n);
  for (std::size_t g = 0; g < groups; ++g) {
    ConstMap ag(a.data().data() + (broadcast_a ? 0 : g * m * k), m, k);
    MutMap cg(c.data() + g * m * n, m, n);
    if (transpose_b) {
      cg.noalias() = ag * ConstMap(b.data().data() + g * n * k, n, k).transpose();
    } else {
      cg.noalias() = ag * ConstMap(b.data().data() + g * k * n, k, n);
    }
  }
  Tensor out = make_output({groups, m, n}, std::move(c), "bmm");
  if (wants_grad({&a, &b})) {
    auto as = a.storage(), bs = b.storage();
    record("bmm", {as, bs}, out,
           [as, bs, groups, broadcast_a, transpose_b, m, k, n](std::span<const double> g) {
             for (std::size_t gi = 0; gi < groups; ++gi) {
               ConstMap gc(g.data() + gi * m * n, m, n);
               const double* bptr = bs->values.data() + gi * k * n;
               const double* aptr = as->values.data() + (broadcast_a ? 0 : gi * m * k);
               if (as->requires_grad) {
                 MutMap ga(grad_of(*as).data() + (broadcast_a ? 0 : gi * m * k), m, k);
                 if (transpose_b) {
                   ga.noalias() += gc * ConstMap(bptr, n, k);
                 } else {
                   ga.noalias() += gc * ConstMap(bptr, k, n).transpose();
                 }
               }
               if (bs->requires_grad) {
                 if (transpose_b) {
                   MutMap(grad_of(*bs).data() + gi * k * n, n, k).noalias() +=
                       gc.transpose() * ConstMap(aptr, m, k);
                 } else {
                   MutMap(grad_of(*bs).data() + gi * k * n, k, n).noalias() +=
                       ConstMap(aptr, m, k).transpose() * gc;
                 }
               }
             }
           });
  }
  return out;
}

namespace {

template <typename Fwd>
Tensor binary(std::string_view op, const Tensor& a, const Tensor& b, Fwd fwd, double da_sign,
              double db_sign, bool product) {
  if (a.shape() != b.shape()) mismatch(op, a, b);
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = fwd(a.data()[i], b.data()[i]);
  Tensor out = make_output(a.shape(), std::move(v), op);
  if (wants_grad({&a, &b})) {
    auto as = a.storage(), bs = b.storage();
    record(op, {as, bs}, out, [as, bs, da_sign, db_sign, product](std::span<const double> g) {
      if (as->requires_grad) {
        auto& ga = grad_of(*as);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (product ? bs->values[i] : da_sign);
      }
      if (bs->requires_grad) {
        auto& gb = grad_of(*bs);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * (product ? as->values[i] : db_sign);
      }
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary("add", a, b, [](double x, double y) { return x + y; }, 1.0, 1.0, false);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary("sub", a, b, [](double x, double y) { return x - y; }, 1.0, -1.0, false);
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  return binary("hadamard", a, b, [](double x, double y) { return x * y; }, 0.0, 0.0, true);
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank("add_bias", bias, 1);
  if (x.rank() == 0 || x.shape().back() != bias.dim(0)) mismatch("add_bias", x, bias);
  const auto n = bias.dim(0);
  std::vector<double> v(x.values());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += bias.data()[i % n];
  Tensor out = make_output(x.shape(), std::move(v), "add_bias");
  if (wants_grad({&x, &bias})) {
    auto xs = x.storage(), bs = bias.storage();
    record("add_bias", {xs, bs}, out, [xs, bs, n](std::span<const double> g) {
      if (xs->requires_grad) {
        auto& gx = grad_of(*xs);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (bs->requires_grad) {
        auto& gb = grad_of(*bs);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sin(const Tensor& x) {
  return unary(
      "sin", x, [](double v) { return std::sin(v); }, [](double v, double) { return std::cos(v); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("transpose needs rank >= 2, got " + shape_string(x.shape()));
  Shape shape = x.shape();
  const auto r = shape[shape.size() - 2], c = shape.back();
  std::swap(shape[shape.size() - 2], shape.back());
  const auto batch = x.size() / (r * c);
  std::vector<double> v(x.size());
  for (std::size_t b = 0; b < batch; ++b) {
    MutMap(v.data() + b * r * c, c, r) = ConstMap(x.data().data() + b * r * c, r, c).transpose();
  }
  Tensor out = make_output(std::move(shape), std::move(v), "transpose");
  if (wants_grad({&x})) {
    auto xs = x.storage();
    record("transpose", {xs}, out, [xs, batch, r, c](std::span<const double> g) {
      auto& gx = grad_of(*xs);
      for (std::size_t b = 0; b < batch; ++b) {
        MutMap(gx.data() + b * r * c, r, c) += ConstMap(g.data() + b * r * c, c, r).transpose();
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  Tensor out = make_output(std::move(shape), x.values(), "reshape");
  if (wants_grad({&x})) {
    auto xs = x.storage();
    record("reshape", {xs}, out, [xs](std::span<const double> g) {
      auto& gx = grad_of(*xs);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const Tensor& first = parts.front();
  if (axis >= first.rank()) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for " +
                         shape_string(first.shape()));
  }
  Shape shape = first.shape();
  shape[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.rank()) mismatch("concat", first, p);
    for (std::size_t i = 0; i < p.rank(); ++i) {
      if (i != axis && p.dim(i) != first.dim(i)) mismatch("concat", first, p);
    }
    shape[axis] += p.dim(axis);
  }
  const auto out_split = split_at(shape, axis);
  std::vector<double> v(shape_numel(shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const auto chunk = p.dim(axis) * out_split.inner;
    for (std::size_t o = 0; o < out_split.outer; ++o) {
      std::copy_n(p.data().data() + o * chunk, chunk,
                  v.data() + o * out_split.extent * out_split.inner + offset * out_split.inner);
    }
    offset += p.dim(axis);
  }
  Tensor out = make_output(std::move(shape), std::move(v), "concat");
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (Tape::active() && any) {
    std::vector<Storage> ins;
    for (const auto& p : parts) ins.push_back(p.storage());
    record("concat", ins, out, [ins, offsets, out_split](std::span<const double> g) {
      for (std::size_t pi = 0; pi < ins.size(); ++pi) {
        if (!ins[pi]->requires_grad) continue;
        auto& gp = grad_of(*ins[pi]);
        const auto extent = gp.size() / (out_split.outer * out_split.inner);
        const auto chunk = extent * out_split.inner;
        for (std::size_t o = 0; o < out_split.outer; ++o) {
          const double* src = g.data() + o * out_split.extent * out_split.inner + offsets[pi] * out_split.inner;
          double* dst = gp.data() + o * chunk;
          for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= x.rank()) {
    throw DimensionError("slice: axis " + std::to_string(axis) + " out of range for " +
                         shape_string(x.shape()));
  }
  if (begin >= end || end > x.dim(axis)) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for extent " + std::to_string(x.dim(axis)));
  }
  const auto sp = split_at(x.shape(), axis);
  Shape shape = x.shape();
  shape[axis] = end - begin;
  const auto chunk = (end - begin) * sp.inner;
  std::vector<double> v(sp.outer * chunk);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    std::copy_n(x.data().data() + (o * sp.extent + begin) * sp.inner, chunk, v.data() + o * chunk);
  }
  Tensor out = make_output(std::move(shape), std::move(v), "slice");
  if (wants_grad({&x})) {
    auto xs = x.storage();
    record("slice", {xs}, out, [xs, sp, begin, chunk](std::span<const double> g) {
      auto& gx = grad_of(*xs);
      for (std::size_t o = 0; o < sp.outer; ++o) {
        double* dst = gx.data() + (o * sp.extent + begin) * sp.inner;
        const double* src = g.data() + o * chunk;
        for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
      }
    });
  }
  return out;
}

Tensor tile(const Tensor& x, std::size_t times) {
  if (x.rank() == 0) throw DimensionError("tile needs rank >= 1");
  if (times == 0) throw DimensionError("tile count must be positive");
  Shape shape = x.shape();
  shape[0] *= times;
  std::vector<double> v;
  v.reserve(x.size() * times);
  for (std::size_t t = 0; t < times; ++t) v.insert(v.end(), x.data().begin(), x.data().end());
  Tensor out = make_output(std::move(shape), std::move(v), "tile");
  if (wants_grad({&x})) {
    auto xs = x.storage();
    record("tile", {xs}, out, [xs, times](std::span<const double> g) {
      auto& gx = grad_of(*xs);
      const auto n = gx.size();
      for (std::size_t t = 0; t < times; ++t) {
        for (std::size_t i = 0; i < n; ++i) gx[i] += g[t * n + i];
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor out = make_output({}, {total}, "sum");
  if (wants_grad({&x})) {
    auto xs = x.storage();
    record("sum", {xs}, out, [xs](std::span<const double> g) {
      auto& gx = grad_of(*xs);
      for (auto& e : gx) e += g[0];
    });
  }
  return out;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) mismatch("mse_loss", pred, target);
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.data()[i] - target.data()[i];
    total += d * d;
  }
  Tensor out = make_output({}, {total * inv_n}, "mse_loss");
  if (wants_grad({&pred, &target})) {
    auto ps = pred.storage(), ts = target.storage();
    record("mse_loss", {ps, ts}, out, [ps, ts, inv_n](std::span<const double> g) {
      const double f = 2.0 * inv_n * g[0];
      if (ps->requires_grad) {
        auto& gp = grad_of(*ps);
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += f * (ps->values[i] - ts->values[i]);
      }
      if (ts->requires_grad) {
        auto& gt = grad_of(*ts);
        for (std::size_t i = 0; i < gt.size(); ++i) gt[i] -= f * (ps->values[i] - ts->values[i]);
      }
    });
  }
  return out;
}

Tensor softmax_rows(const Tensor& z) {
  if (z.rank() == 0) throw DimensionError("softmax_rows needs rank >= 1");
  const auto n = z.shape().back();
  const auto rows = z.size() / n;
  std::vector<double> v(z.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = z.data().data() + r * n;
    double* o = v.data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < n; ++j) o[j] /= total;
  }
  Tensor out = make_output(z.shape(), std::move(v), "softmax_rows");
  if (wants_grad({&z})) {
    auto zs = z.storage(), os = out.storage();
    record("softmax_rows", {zs}, out, [zs, os, n, rows](std::span<const double> g) {
      auto& gz = grad_of(*zs);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = os->values.data() + r * n;
        const double* gy = g.data() + r * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
        for (std::size_t j = 0; j < n; ++j) gz[r * n + j] += y[j] * (gy[j] - dot);
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double epsilon) {
  require_rank("layer_norm", gain, 1);
  require_rank("layer_norm", bias, 1);
  if (x.rank() == 0 || x.shape().back() != gain.dim(0)) mismatch("layer_norm", x, gain);
  if (bias.dim(0) != gain.dim(0)) mismatch("layer_norm", gain, bias);
  const auto n = gain.dim(0);
  const auto rows = x.size() / n;
  std::vector<double> v(x.size());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += in[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + epsilon);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[r * n + j] = (in[j] - mu) * inv_std[r];
      v[r * n + j] = xhat[r * n + j] * gain.data()[j] + bias.data()[j];
    }
  }
  Tensor out = make_output(x.shape(), std::move(v), "layer_norm");
  if (wants_grad({&x, &gain, &bias})) {
    auto xs = x.storage(), gs = gain.storage(), bs = bias.storage();
    record("layer_norm", {xs, gs, bs}, out,
           [xs, gs, bs, n, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](
               std::span<const double> g) {
             if (gs->requires_grad) {
               auto& gg = grad_of(*gs);
               for (std::size_t i = 0; i < g.size(); ++i) gg[i % n] += g[i] * xhat[i];
             }
             if (bs->requires_grad) {
               auto& gb = grad_of(*bs);
               for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
             }
             if (xs->requires_grad) {
               auto& gx = grad_of(*xs);
               const double inv_n = 1.0 / static_cast<double>(n);
               for (std::size_t r = 0; r < rows; ++r) {
                 double mean_d = 0.0, mean_dx = 0.0;
                 for (std::size_t j = 0; j < n; ++j) {
                   const double d = g[r * n + j] * gs->values[j];
                   mean_d += d;
                   mean_dx += d * xhat[r * n + j];
                 }
                 mean_d *= inv_n;
                 mean_dx *= inv_n;
                 for (std::size_t j = 0; j < n; ++j) {
                   const double d = g[r * n + j] * gs->values[j];
                   gx[r * n + j] += inv_std[r] * (d - mean_d - xhat[r * n + j] * mean_dx);
                 }
               }
             }
           });
  }
  return out;
}

Tensor conv1d(const Tensor& x, const Tensor& kernels, const std::optional<Tensor>& bias,
              std::size_t groups) {
  if (x.rank() != 2 && x.rank() != 3) {
    throw DimensionError("conv1d: input must be [c_in, L] or [B, c_in, L], got " + shape_string(x.shape()));
  }
  require_rank("conv1d", kernels, 3);
  const bool batched = x.rank() == 3;
  const auto batch = batched ? x.dim(0) : 1;
  const auto c_in = x.dim(batched ? 1 : 0), length = x.dim(batched ? 2 : 1);
  const auto c_out = kernels.dim(0), cpg = kernels.dim(1), width = kernels.dim(2);
  if (groups == 0 || c_in % groups != 0 || c_out % groups != 0 || cpg != c_in / groups) {
    mismatch("conv1d", x, kernels);
  }
  if (width > length) {
    throw DimensionError("conv1d: kernel width " + std::to_string(width) + " exceeds input length " +
                         std::to_string(length));
  }
  if (bias) {
    require_rank("conv1d bias", *bias, 1);
    if (bias->dim(0) != c_out) mismatch("conv1d", kernels, *bias);
  }
  const auto l_out = length - width + 1;
  const auto outs_per_group = c_out / groups;
  std::vector<double> v(batch * c_out * l_out, 0.0);
  const double* xv = x.data().data();
  const double* kv = kernels.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < c_out; ++o) {
      const auto g = o / outs_per_group;
      double* dst = v.data() + (b * c_out + o) * l_out;
      for (std::size_t ci = 0; ci < cpg; ++ci) {
        const double* src = xv + (b * c_in + g * cpg + ci) * length;
        const double* ker = kv + (o * cpg + ci) * width;
        for (std::size_t t = 0; t < l_out; ++t) {
          double acc = 0.0;
          for (std::size_t u = 0; u < width; ++u) acc += ker[u] * src[t + u];
          dst[t] += acc;
        }
      }
      if (bias) {
        for (std::size_t t = 0; t < l_out; ++t) dst[t] += bias->data()[o];
      }
    }
  }
  Shape shape = batched ? Shape{batch, c_out, l_out} : Shape{c_out, l_out};
  Tensor out = make_output(std::move(shape), std::move(v), "conv1d");
  const bool bias_grad = bias && bias->requires_grad();
  if (wants_grad({&x, &kernels}) || (Tape::active() && bias_grad)) {
    auto xs = x.storage(), ks = kernels.storage();
    Storage bs = bias ? bias->storage() : nullptr;
    std::vector<Storage> ins{xs, ks};
    if (bs) ins.push_back(bs);
    record("conv1d", ins, out,
           [xs, ks, bs, batch, c_in, length, c_out, cpg, width, l_out, outs_per_group](
               std::span<const double> gout) {
             for (std::size_t b = 0; b < batch; ++b) {
               for (std::size_t o = 0; o < c_out; ++o) {
                 const auto g = o / outs_per_group;
                 const double* go = gout.data() + (b * c_out + o) * l_out;
                 if (bs && bs->requires_grad) {
                   auto& gb = grad_of(*bs);
                   for (std::size_t t = 0; t < l_out; ++t) gb[o] += go[t];
                 }
                 for (std::size_t ci = 0; ci < cpg; ++ci) {
                   const auto x_off = (b * c_in + g * cpg + ci) * length;
                   const auto k_off = (o * cpg + ci) * width;
                   if (ks->requires_grad) {
                     auto& gk = grad_of(*ks);
                     for (std::size_t u = 0; u < width; ++u) {
                       double acc = 0.0;
                       for (std::size_t t = 0; t < l_out; ++t) acc += go[t] * xs->values[x_off + t + u];
                       gk[k_off + u] += acc;
                     }
                   }
                   if (xs->requires_grad) {
                     auto& gx = grad_of(*xs);
                     for (std::size_t t = 0; t < l_out; ++t) {
                       for (std::size_t u = 0; u < width; ++u) {
                         gx[x_off + t + u] += go[t] * ks->values[k_off + u];
                       }
                     }
                   }
                 }
               }
             }
           });
  }
  return out;
}

std::size_t band_size(std::size_t n, std::size_t l) {
  std::size_t total = n;
  for (std::size_t o = 1; o <= l; ++o) total += 2 * (n - o);
  return total;
}

Tensor band_to_dense(const Tensor& band, std::size_t n, std::size_t l) {
  if (l >= n) {
    throw DimensionError("band half-width l=" + std::to_string(l) + " must be below n=" + std::to_string(n));
  }
  require_rank("band_to_dense", band, 2);
  const auto heads = band.dim(0);
  const auto per_head = band_size(n, l);
  if (band.dim(1) != per_head) {
    throw DimensionError("band_to_dense: storage " + shape_string(band.shape()) + " does not hold " +
                         std::to_string(per_head) + " entries per head");
  }
  // Flat band index -> dense index, shared by forward and backward.
  std::vector<std::size_t> where;
  where.reserve(per_head);
  for (long off = -static_cast<long>(l); off <= static_cast<long>(l); ++off) {
    for (std::size_t r = 0; r < n; ++r) {
      const long c = static_cast<long>(r) + off;
      if (c < 0 || c >= static_cast<long>(n)) continue;
      where.push_back(r * n + static_cast<std::size_t>(c));
    }
  }
  std::vector<double> v(heads * n * n, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < per_head; ++i) v[h * n * n + where[i]] = band.data()[h * per_head + i];
  }
  Tensor out = make_output({heads, n, n}, std::move(v), "band_to_dense");
  if (wants_grad({&band})) {
    auto bs = band.storage();
    record("band_to_dense", {bs}, out, [bs, where = std::move(where), heads, n, per_head](std::span<const double> g) {
      auto& gb = grad_of(*bs);
      for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t i = 0; i < per_head; ++i) gb[h * per_head + i] += g[h * n * n + where[i]];
      }
    });
  }
  return out;
}

}  // namespace eal
