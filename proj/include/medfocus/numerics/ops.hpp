#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "medfocus/numerics/tensor.hpp"

namespace medfocus {

// Every op below is differentiable w.r.t. each tensor argument.
// Rank-1 tensors of extent d stand for vectors; matrices are rank 2.

/// [p x q] x [q x r] -> [p x r].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// Multiplies every element of `a` by the single value held in `s`.
Tensor scale_by(const Tensor& a, const Tensor& s);

/// x[n x d] + v[d] added to every row.
Tensor add_rows(const Tensor& x, const Tensor& v);

/// GELU, tanh form: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Tensor gelu(const Tensor& x);
Tensor exp(const Tensor& x);
/// Clamps values to [lo, hi]; the gradient is zero where the clamp is active.
Tensor clamp(const Tensor& x, double lo, double hi);

/// Max-subtracted softmax over `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);

/// Normalizes the last axis to zero mean / unit variance, then applies
/// gain and bias: (x - mean) / sqrt(var + eps) * gain + bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// [n x d] -> [d].
Tensor mean_rows(const Tensor& x);
/// Row i of a matrix as a [d] vector.
Tensor row(const Tensor& x, std::size_t i);
/// Stacks k equal-length vectors into [k x d].
Tensor stack_rows(std::span<const Tensor> rows);
/// [a x d] over [b x d] -> [(a+b) x d].
Tensor concat_rows(const Tensor& top, const Tensor& bottom);
/// Columns [begin, begin+count) of a matrix.
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
/// Side-by-side concatenation of matrices with equal row counts.
Tensor concat_cols(std::span<const Tensor> parts);
Tensor reshape(const Tensor& x, Shape shape);
Tensor dot(const Tensor& a, const Tensor& b);

/// Divides each row (or the single vector) by its Euclidean norm.
/// Throws ZeroVector when a row is exactly zero.
Tensor l2_normalize(const Tensor& x);

/// Mean over rows of -log softmax(logits[i])[labels[i]]. `logits` is [C] or
/// [B x C]. Throws LabelOutOfRange.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

}  // namespace medfocus
