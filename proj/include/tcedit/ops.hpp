#pragma once

#include <cstddef>
#include <span>

#include "tcedit/tensor.hpp"

namespace tcedit {

// All ops record onto the active Tape<T> when an input requires a gradient.
// Shape violations throw DimensionError naming the offending shapes.

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

// Same values under a new shape with equal element count.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

// x[m×n] + bias[n] broadcast over rows.
template <typename T>
Tensor<T> add_row_bias(const Tensor<T>& x, const Tensor<T>& bias);

// x·w + b for x[m×k], w[k×n], b[n].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

inline constexpr double kLayerNormEps = 1e-5;

// Normalizes over the last dimension, then gain ⊙ x̂ + bias.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     double eps = kLayerNormEps);

// Tanh approximation.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

// Saturates inside the open interval (0, 1) at the representable extremes.
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, std::size_t axis);

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length);

// out[r] = x[indices[r]] for 2-D x; gradient scatter-adds.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> indices);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> mean(const Tensor<T>& x);

// Multi-head scaled dot-product self-attention applied independently to
// consecutive row segments of q/k/v [N×d]. Segment lengths sum to N; no mask.
template <typename T>
Tensor<T> segmented_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                              std::span<const std::size_t> segment_lengths, std::size_t n_heads);

inline constexpr double kProbabilityClamp = 1e-7;

// Mean over instances of -[y log p + (1-y) log(1-p)] with p = sigmoid(logit)
// clamped to [eps, 1-eps]; clamped instances contribute no gradient.
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, std::span<const T> labels,
                          double eps = kProbabilityClamp);

}  // namespace tcedit
