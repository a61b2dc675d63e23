#pragma once

#include <array>

#include "ensr/image.hpp"

namespace ensr {

/// Keys cubic-convolution kernel with parameter a (default -0.5).
double keys_kernel(double x, double a = -0.5);

/// 2x cubic-convolution enlargement. Output pixel centers map to input
/// coordinates (y + 0.5) / 2 - 0.5; borders replicate. Input must be >= 4x4.
Image bicubic_upscale(const Image& lr, int factor = 2);

struct NediOptions {
  int window = 8;                   ///< side of the local training window (LR pixels)
  double max_condition = 1e8;       ///< above this the bilinear fallback is used
  bool clamp_to_neighbors = true;   ///< keep each estimate inside its 4-neighbor range
};

struct NediStats {
  std::size_t estimated = 0;  ///< pixels interpolated with covariance weights
  std::size_t fallback = 0;   ///< pixels that fell back to bilinear
};

/// Two-pass new-edge-directed 2x interpolation. LR pixel (i, j) lands on HR
/// (2i, 2j); pass one fills (2i+1, 2j+1) from its diagonal neighbors, pass
/// two fills the remaining pixels from their axis neighbors. Weights are
/// the least-squares 4-tap predictor fitted over a local window.
Image nedi_upscale(const Image& lr, int factor = 2, const NediOptions& opts = {},
                   NediStats* stats = nullptr);

/// Least-squares 4-tap predictor from stacked samples (rows of `neighbors`
/// against `targets`). Returns false when the normal equations exceed the
/// condition threshold. Exposed for tests.
bool solve_four_tap(const std::vector<std::array<double, 4>>& neighbors,
                    const std::vector<double>& targets, double max_condition,
                    std::array<double, 4>& weights);

}  // namespace ensr
