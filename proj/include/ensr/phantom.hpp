#pragma once

#include <cstdint>
#include <vector>

#include "ensr/image.hpp"

namespace ensr {

struct PhantomConfig {
  std::size_t height = 320;
  std::size_t width = 320;
  int min_ellipses = 3;
  int max_ellipses = 8;
  double background = 0.05;   ///< upper bound of the random background level
  double texture = 0.04;      ///< amplitude of the band-limited texture
  double noise_sigma = 0.0;   ///< Rician noise level (0 disables)

  /// Throws ConfigError on dims not divisible by 4, negative sigma or an
  /// empty ellipse range.
  void validate() const;
};

/// One ellipse with a linear intensity ramp across it.
struct Ellipse {
  double cy = 0, cx = 0;  ///< center, pixels
  double ry = 1, rx = 1;  ///< semi-axes, pixels
  double angle = 0;       ///< radians
  double level = 0;       ///< intensity at the center
  double gy = 0, gx = 0;  ///< ramp slope per pixel

  bool contains(double y, double x) const;
  double value(double y, double x) const;
};

struct PhantomLayout {
  double background = 0;
  std::vector<Ellipse> ellipses;  ///< the first one is the body outline
};

/// The random geometry generate_phantom draws for a seed.
PhantomLayout phantom_layout(const PhantomConfig& cfg, std::uint64_t seed);

/// Additive ellipses on a constant background, plus texture and optional
/// Rician noise, clipped to [0, 1]. Deterministic per seed.
Image generate_phantom(const PhantomConfig& cfg, std::uint64_t seed);

/// Renders given ellipses on a constant background without texture or noise.
Image render_ellipses(std::size_t height, std::size_t width, double background, const std::vector<Ellipse>& ellipses);

}  // namespace ensr
