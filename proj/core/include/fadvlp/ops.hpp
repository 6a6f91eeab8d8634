#pragma once

// Differentiable primitives. Every function records a backward rule on the
// active tape when any input requires a gradient. Explicitly instantiated for
// float (training) and double (gradient checks).

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "fadvlp/tensor.hpp"

namespace fadvlp {

// Elementwise, identical shapes.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

// x[..., n] + bias[n]
template <typename T> Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);
template <typename T> Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& x, T value);
// x * s for a single-element tensor s.
template <typename T> Tensor<T> scale_by(const Tensor<T>& x, const Tensor<T>& s);

template <typename T> Tensor<T> tanh(const Tensor<T>& x);
// Exact (erf) GELU.
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
template <typename T> Tensor<T> relu(const Tensor<T>& x);

// a[..., k] x b[k, n] -> [..., n]. Transpose flags are only allowed for
// rank-2 operands.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_a = false,
                 bool transpose_b = false);
// Batched: a[g, m, k] x b[g, k, n] (or b[g, n, k] with transpose_b).
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false);
template <typename T> Tensor<T> transpose(const Tensor<T>& a);

template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T> Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);
template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t begin, std::size_t end);
// Rows of a rank-2 table: out[i] = table[ids[i]].
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const std::size_t> ids);

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
template <typename T> Tensor<T> mean_axis(const Tensor<T>& x, std::size_t axis);

template <typename T> Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);
template <typename T> Tensor<T> log_softmax(const Tensor<T>& x, std::size_t axis);

// Normalizes over the last axis; gain and bias have that axis' length.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-5));

// x / max(||x||, eps) along the axis.
template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& x, std::size_t axis, T eps = T(1e-12));

// Mean of -log softmax(logits)[target] over rows whose target != ignore_id.
// logits is [..., V]; targets has one entry per row.
template <typename T>
Tensor<T> cross_entropy_with_logits(const Tensor<T>& logits, std::span<const int> targets,
                                    int ignore_id);

// Patch extraction for convolutions: x[b, h, w, c] ->
// [b, ho, wo, kernel*kernel*c] with zero padding.
template <typename T>
Tensor<T> im2col(const Tensor<T>& x, std::size_t kernel, std::size_t stride, std::size_t pad);

// Inverted dropout; identity when rate == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, std::mt19937_64& rng);

}  // namespace fadvlp
