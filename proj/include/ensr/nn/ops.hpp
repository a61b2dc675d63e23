#pragma once

#include <cstddef>

#include "ensr/nn/graph.hpp"

namespace ensr::nn {

// Elementwise (same shape).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var pow_scalar(const Var& a, double p);

/// g * (x > 0 ? 1 : slope). Differentiable in g only; x acts as a mask.
Var gate(const Var& g, const Var& x, double slope);
Var relu(const Var& x);
Var leaky_relu(const Var& x, double slope);
Var abs(const Var& x);

// Reductions and their broadcasting adjoints.
Var sum_all(const Var& x);                        ///< -> shape (1)
Var expand_all(const Var& s, const Shape& shape);  ///< (1) -> shape
Var mean_all(const Var& x);
Var sum_sample(const Var& x);                         ///< (N, ...) -> (N)
Var expand_sample(const Var& s, const Shape& shape);  ///< (N) -> (N, ...)
Var sum_channel(const Var& x);                         ///< (N, C, H, W) -> (C)
Var expand_channel(const Var& c, const Shape& shape);  ///< (C) -> (N, C, H, W)
Var sum_hw(const Var& x);                         ///< (N, C, H, W) -> (N, C)
Var expand_hw(const Var& s, const Shape& shape);  ///< (N, C) -> (N, C, H, W)

// Channel plumbing for skip connections.
Var concat_channels(const Var& a, const Var& b);
Var slice_channels(const Var& x, std::size_t begin, std::size_t count);
Var embed_channels(const Var& x, std::size_t total, std::size_t begin);

// Forward differences along width (x) and height (y) and their adjoints.
Var diff_x(const Var& x);  ///< (N, C, H, W) -> (N, C, H, W - 1)
Var diff_x_adjoint(const Var& g, std::size_t width);
Var diff_y(const Var& x);  ///< (N, C, H, W) -> (N, C, H - 1, W)
Var diff_y_adjoint(const Var& g, std::size_t height);

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t padding = 1;
};

/// Cross-correlation of x (N, Cin, H, W) with w (Cout, Cin, k, k), zero
/// padding. Output spatial size floor((H + 2p - k) / stride) + 1.
Var conv2d(const Var& x, const Var& w, ConvGeometry geo);
/// Adjoint of conv2d with respect to its input (a transposed convolution).
Var conv2d_input_grad(const Var& g, const Var& w, const Shape& input_shape, ConvGeometry geo);
/// Adjoint of conv2d with respect to its weights.
Var conv2d_weight_grad(const Var& x, const Var& g, const Shape& weight_shape, ConvGeometry geo);

// Composite layers.
Var add_channel_bias(const Var& x, const Var& b);
/// Per-sample normalization over (C, H, W) followed by a per-channel affine.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
/// Global average pooling (N, C, H, W) -> (N, C).
Var global_avg_pool(const Var& x);
Var mean_squared_error(const Var& a, const Var& b);
Var mean_absolute_error(const Var& a, const Var& b);

}  // namespace ensr::nn
