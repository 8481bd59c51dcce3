#pragma once

// Differentiable tensor operations. Every op accepts finite inputs, produces
// finite outputs, and records a backward closure when any input requires grad.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hgtnet/rng.hpp"
#include "hgtnet/tensor.hpp"

namespace hgt {

// ---- elementwise and broadcasting ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// x[..., t] + y[t] where y's shape equals the trailing dims of x.
Tensor add_broadcast(const Tensor& x, const Tensor& y);
// out[b, i, j] = row[b, i] + col[b, j] for row, col of shape B x N.
Tensor pairwise_add(const Tensor& row, const Tensor& col);

// ---- shape ----

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, std::span<const std::size_t> axes);
Tensor permute(const Tensor& x, std::initializer_list<std::size_t> axes);
// Swap the last two axes.
Tensor transpose_last(const Tensor& x);
// Concatenate along the last axis; leading dims must match.
Tensor concat_last(const Tensor& a, const Tensor& b);
// Concatenate along axis 0; trailing dims must match.
Tensor concat_first(const Tensor& a, const Tensor& b);
// Rows [start, start + length) of axis 0.
Tensor narrow_first(const Tensor& x, std::size_t start, std::size_t length);

// ---- reductions ----

Tensor sum(const Tensor& x);
// Arithmetic mean over one axis (the axis is removed).
Tensor mean_axis(const Tensor& x, std::size_t axis);

// ---- linear algebra ----

// a[m x k] * b[k x n].
Tensor matmul(const Tensor& a, const Tensor& b);
// a[B x m x k] * b[B x k x n].
Tensor bmm(const Tensor& a, const Tensor& b);
// x[..., in] * w[in x out] (+ bias[out] when defined).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias = Tensor());

// ---- convolution and pooling ----

// x[B x C x H x W], w[F x C x kH x kW], bias[F] (may be undefined).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              std::size_t padding);
Tensor max_pool2d(const Tensor& x, std::size_t window, std::size_t stride);

// ---- normalization ----

// Softmax over the last axis, max-subtracted.
Tensor softmax(const Tensor& x);
// Softmax over the last axis of x[..., N, N] restricted to mask[i * N + j] != 0.
// Masked entries are exactly zero and receive no gradient. Every row must keep
// at least one entry.
Tensor masked_softmax(const Tensor& x, std::span<const std::uint8_t> mask);
// Per-slice standardization over the last axis (population variance), then affine.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// ---- activations ----

enum class ActivationKind { kRelu, kGelu, kLeakyRelu };

struct Activation {
  ActivationKind kind = ActivationKind::kRelu;
  double slope = 0.01;  // leaky_relu only
};

ActivationKind parse_activation(const std::string& name);
Tensor activation(const Tensor& x, Activation act);
Tensor relu(const Tensor& x);
// tanh approximation.
Tensor gelu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);

// Inverted dropout. Element i of the mask is drawn from rng.uniform_at(i), so
// the mask depends only on the stream and the element position.
Tensor dropout(const Tensor& x, double p, bool training, const RngStream& rng);

}  // namespace hgt
