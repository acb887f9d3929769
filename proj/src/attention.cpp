#include "eal/attention.hpp"

#include <cmath>

#include "eal/ops.hpp"

namespace eal {

std::string to_string(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::self: return "self";
    case AttentionVariant::easy_dense: return "easy_dense";
    case AttentionVariant::easy_sparse: return "easy_sparse";
  }
  return "?";
}

AttentionVariant parse_attention_variant(const std::string& name) {
  if (name == "self") return AttentionVariant::self;
  if (name == "easy_dense" || name == "easy") return AttentionVariant::easy_dense;
  if (name == "easy_sparse") return AttentionVariant::easy_sparse;
  throw std::invalid_argument("unknown attention variant '" + name + "'");
}

void validate(const AttentionConfig& c) {
  if (c.n == 0 || c.d == 0 || c.heads == 0) throw DimensionError("attention extents must be positive");
  if (c.d % c.heads != 0) {
    throw DimensionError("heads=" + std::to_string(c.heads) + " does not divide d=" + std::to_string(c.d));
  }
  if (c.variant == AttentionVariant::easy_sparse && c.band_l >= c.n) {
    throw DimensionError("band half-width l=" + std::to_string(c.band_l) + " must be below n=" +
                         std::to_string(c.n));
  }
}

Attention::Attention(const AttentionConfig& config, Rng& rng) : config_(config) {
  validate(config_);
  const auto n = config_.n, d = config_.d, h = config_.heads;
  const double wb = 1.0 / std::sqrt(static_cast<double>(d));
  const double ab = 1.0 / std::sqrt(static_cast<double>(n));
  switch (config_.variant) {
    case AttentionVariant::self:
      w_q = uniform_param({d, d}, wb, rng);
      w_k = uniform_param({d, d}, wb, rng);
      w_v = uniform_param({d, d}, wb, rng);
      if (config_.output_projection) w_c = uniform_param({d, d}, wb, rng);
      break;
    case AttentionVariant::easy_dense:
      alpha_dense = uniform_param({h, n, n}, ab, rng);
      w_value = uniform_param({d, d}, wb, rng);
      break;
    case AttentionVariant::easy_sparse:
      alpha_band = uniform_param({h, band_size(n, config_.band_l)}, ab, rng);
      w_value = uniform_param({d, d}, wb, rng);
      break;
  }
}

Tensor Attention::alpha() const {
  if (config_.variant == AttentionVariant::easy_dense) return alpha_dense;
  if (config_.variant == AttentionVariant::easy_sparse) {
    return band_to_dense(alpha_band, config_.n, config_.band_l);
  }
  throw std::logic_error("self attention has no learned alpha");
}

Tensor Attention::forward(const Tensor& x, std::size_t batch, Tensor* scores) const {
  const auto n = config_.n, d = config_.d, h = config_.heads, k = d / h;
  if (x.rank() != 2 || x.dim(1) != d || x.dim(0) != batch * n) {
    throw DimensionError("attention expects [" + std::to_string(batch * n) + "x" + std::to_string(d) +
                         "], got " + shape_string(x.shape()));
  }
  auto head_view = [&](const Tensor& full, std::size_t i) {
    Tensor cols = h == 1 ? full : slice(full, 1, i * k, (i + 1) * k);
    return reshape(cols, {batch, n, k});
  };

  std::vector<Tensor> outs;
  if (config_.variant == AttentionVariant::self) {
    const Tensor q = matmul(x, w_q), kk = matmul(x, w_k), v = matmul(x, w_v);
    const double inv_sqrt_k = 1.0 / std::sqrt(static_cast<double>(k));
    std::vector<Tensor> all_scores;
    for (std::size_t i = 0; i < h; ++i) {
      Tensor a = softmax_rows(scale(bmm(head_view(q, i), head_view(kk, i), true), inv_sqrt_k));
      if (scores) all_scores.push_back(a);
      outs.push_back(reshape(bmm(a, head_view(v, i)), {batch * n, k}));
    }
    if (scores) {
      *scores = (h == 1 ? all_scores[0] : concat(all_scores, 0)).detach();
    }
    Tensor merged = h == 1 ? outs[0] : concat(outs, 1);
    return config_.output_projection ? matmul(merged, w_c) : merged;
  }

  const Tensor a = alpha();
  if (scores) *scores = a.detach();
  const Tensor v = matmul(x, w_value);
  for (std::size_t i = 0; i < h; ++i) {
    Tensor a_i = h == 1 ? a : slice(a, 0, i, i + 1);
    outs.push_back(reshape(bmm(a_i, head_view(v, i)), {batch * n, k}));
  }
  return h == 1 ? outs[0] : concat(outs, 1);
}

std::vector<NamedTensor> Attention::parameters(const std::string& prefix) const {
  std::vector<NamedTensor> p;
  switch (config_.variant) {
    case AttentionVariant::self:
      p = {{prefix + "w_q", w_q}, {prefix + "w_k", w_k}, {prefix + "w_v", w_v}};
      if (config_.output_projection) p.push_back({prefix + "w_c", w_c});
      break;
    case AttentionVariant::easy_dense:
      p = {{prefix + "alpha", alpha_dense}, {prefix + "w_value", w_value}};
      break;
    case AttentionVariant::easy_sparse:
      p = {{prefix + "alpha_band", alpha_band}, {prefix + "w_value", w_value}};
      break;
  }
  return p;
}

std::size_t attention_param_count(const AttentionConfig& c) {
  validate(c);
  const auto dd = c.d * c.d;
  switch (c.variant) {
    case AttentionVariant::self: return (c.output_projection ? 4 : 3) * dd;
    case AttentionVariant::easy_dense: return c.heads * c.n * c.n + dd;
    case AttentionVariant::easy_sparse: return c.heads * band_size(c.n, c.band_l) + dd;
  }
  return 0;
}

std::uint64_t flops_estimate(const AttentionConfig& c) {
  validate(c);
  const std::uint64_t n = c.n, h = c.heads, k = c.d / c.heads;
  const std::uint64_t nnz = c.variant == AttentionVariant::easy_sparse ? band_size(c.n, c.band_l) : n * n;
  // Row i with m nonzeros costs m multiplies and m-1 adds per value column.
  const std::uint64_t weighted_sum = h * k * (2 * nnz - n);
  if (c.variant != AttentionVariant::self) return weighted_sum;
  return weighted_sum + flops_score_cost * h * n * n;
}

}  // namespace eal
