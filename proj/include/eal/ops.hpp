#pragma once

#include <optional>
#include <vector>

#include "eal/tensor.hpp"

// Differentiable operations. Every op validates shapes, checks its output for
// NaN/Inf and, when a tape is active and some input requires grad, records a
// backward rule.
namespace eal {

// 2-D matrix product [m,k]x[k,n].
Tensor matmul(const Tensor& a, const Tensor& b);

// Batched product: a [G,m,k] (or [1,m,k], broadcast over G) times b [G,k,n];
// with transpose_b, b is [G,n,k] and used as its transpose.
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

// x [..., n] + bias [n], broadcast over all leading positions.
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor relu(const Tensor& x);
Tensor sin(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Swaps the last two axes (rank >= 2).
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
// Stacks `times` copies of x along axis 0.
Tensor tile(const Tensor& x, std::size_t times);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor mse_loss(const Tensor& pred, const Tensor& target);

// Softmax over the last axis, max-shifted.
Tensor softmax_rows(const Tensor& z);

// Normalization over the last axis with affine gain/bias of that width.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double epsilon = 1e-5);

// Valid cross-correlation along the length axis, stride 1.
// x: [c_in, L] or [B, c_in, L]; kernels: [c_out, c_in/groups, w]; bias: [c_out].
Tensor conv1d(const Tensor& x, const Tensor& kernels, const std::optional<Tensor>& bias,
              std::size_t groups = 1);

// Materializes banded storage into dense [heads, n, n] matrices. Storage is
// [heads, band_size(n, l)], diagonals ordered by offset -l..l, each diagonal
// listed by increasing row.
Tensor band_to_dense(const Tensor& band, std::size_t n, std::size_t l);
std::size_t band_size(std::size_t n, std::size_t l);

}  // namespace eal
