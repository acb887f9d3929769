#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eal/optim.hpp"
#include "eal/random.hpp"
#include "eal/tensor.hpp"

namespace eal {

enum class AttentionVariant { self, easy_dense, easy_sparse };

std::string to_string(AttentionVariant v);
AttentionVariant parse_attention_variant(const std::string& name);

struct AttentionConfig {
  AttentionVariant variant = AttentionVariant::easy_dense;
  std::size_t n = 3;      // sequence length (time positions)
  std::size_t d = 3;      // feature width in and out
  std::size_t heads = 1;
  std::size_t band_l = 0;  // easy_sparse only
  bool output_projection = true;  // W_c, self attention only
};

void validate(const AttentionConfig& c);

// One attention layer over time-major sequences. Inputs are a batch of B
// sequences stacked as [B*n, d]; the output has the same shape.
class Attention {
 public:
  Attention(const AttentionConfig& config, Rng& rng);

  const AttentionConfig& config() const { return config_; }

  // Optional `scores` receives the attention matrices, [heads*B, n, n] (head
  // major) for self attention and [heads, n, n] for easy attention.
  Tensor forward(const Tensor& x, std::size_t batch, Tensor* scores = nullptr) const;

  // Materialized alpha [heads, n, n] (easy variants).
  Tensor alpha() const;

  std::vector<NamedTensor> parameters(const std::string& prefix = "") const;

  // Direct handles, for tests and analysis.
  Tensor w_q, w_k, w_v, w_c;  // self
  Tensor alpha_dense;         // easy_dense: [heads, n, n]
  Tensor alpha_band;          // easy_sparse: [heads, band_size(n, l)]
  Tensor w_value;             // easy: [d, d], head i owns columns [i*k, (i+1)*k)

 private:
  AttentionConfig config_;
};

// Closed-form trainable scalar count.
std::size_t attention_param_count(const AttentionConfig& c);

// Operation count for one forward pass at batch 1. Easy attention counts the
// multiply-adds of alpha times the projected values (only structurally nonzero
// alpha entries). Self attention adds flops_score_cost per score for the
// scaling, max shift, exponential and normalization.
inline constexpr std::uint64_t flops_score_cost = 4;
std::uint64_t flops_estimate(const AttentionConfig& c);

}  // namespace eal
