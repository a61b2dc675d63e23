#include "ensr/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ensr/error.hpp"
#include "ensr/random.hpp"

namespace ensr {

void PhantomConfig::validate() const {
  if (height % 4 || width % 4 || height == 0 || width == 0)
    throw ConfigError("phantom dims must be positive multiples of 4, got " + std::to_string(height) + "x" +
                      std::to_string(width));
  if (noise_sigma < 0) throw ConfigError("phantom noise sigma must be >= 0");
  if (texture < 0) throw ConfigError("phantom texture amplitude must be >= 0");
  if (min_ellipses < 1 || max_ellipses < min_ellipses) throw ConfigError("phantom ellipse range is empty");
}

bool Ellipse::contains(double y, double x) const {
  const double c = std::cos(angle), s = std::sin(angle);
  const double dy = y - cy, dx = x - cx;
  const double u = (dx * c + dy * s) / rx;
  const double v = (-dx * s + dy * c) / ry;
  return u * u + v * v <= 1.0;
}

double Ellipse::value(double y, double x) const { return level + gy * (y - cy) + gx * (x - cx); }

PhantomLayout phantom_layout(const PhantomConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const double h = static_cast<double>(cfg.height), w = static_cast<double>(cfg.width);
  PhantomLayout layout;
  layout.background = rng.uniform(0.0, cfg.background);
  const int n = cfg.min_ellipses + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_ellipses - cfg.min_ellipses + 1)));
  for (int i = 0; i < n; ++i) {
    Ellipse e;
    if (i == 0) {
      e.cy = h * rng.uniform(0.45, 0.55);
      e.cx = w * rng.uniform(0.45, 0.55);
      e.ry = h * rng.uniform(0.30, 0.44);
      e.rx = w * rng.uniform(0.30, 0.44);
      e.level = rng.uniform(0.35, 0.6);
    } else {
      e.cy = h * rng.uniform(0.25, 0.75);
      e.cx = w * rng.uniform(0.25, 0.75);
      e.ry = h * rng.uniform(0.04, 0.2);
      e.rx = w * rng.uniform(0.04, 0.2);
      e.level = rng.uniform(0.1, 0.3) * (rng.uniform() < 0.35 ? -1.0 : 1.0);
    }
    e.angle = rng.uniform(0.0, std::numbers::pi);
    const double r = std::max(e.ry, e.rx);
    e.gy = rng.uniform(-0.1, 0.1) / r;
    e.gx = rng.uniform(-0.1, 0.1) / r;
    layout.ellipses.push_back(e);
  }
  return layout;
}

Image render_ellipses(std::size_t height, std::size_t width, double background, const std::vector<Ellipse>& ellipses) {
  Image img = Image::filled(height, width, background);
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c) {
      const double y = static_cast<double>(r), x = static_cast<double>(c);
      for (const Ellipse& e : ellipses)
        if (e.contains(y, x)) img(r, c) += e.value(y, x);
    }
  return img;
}

Image generate_phantom(const PhantomConfig& cfg, std::uint64_t seed) {
  const PhantomLayout layout = phantom_layout(cfg, seed);
  Image img = render_ellipses(cfg.height, cfg.width, layout.background, layout.ellipses);

  // Separate streams keep the geometry of a seed independent of the
  // texture and noise settings.
  if (cfg.texture > 0) {
    Rng rng(derive_seed(seed, 1));
    constexpr int kWaves = 6;
    struct Wave {
      double fy, fx, phase;
    };
    std::vector<Wave> waves;
    for (int k = 0; k < kWaves; ++k) {
      const double f = rng.uniform(0.06, 0.2);
      const double dir = rng.uniform(0.0, std::numbers::pi);
      waves.push_back({f * std::sin(dir), f * std::cos(dir), rng.uniform(0.0, 2.0 * std::numbers::pi)});
    }
    const double amp = cfg.texture / std::sqrt(static_cast<double>(kWaves) / 2.0);
    const Ellipse& body = layout.ellipses.front();
    for (std::size_t r = 0; r < cfg.height; ++r)
      for (std::size_t c = 0; c < cfg.width; ++c) {
        const double y = static_cast<double>(r), x = static_cast<double>(c);
        if (!body.contains(y, x)) continue;
        double t = 0.0;
        for (const Wave& wv : waves) t += std::sin(2.0 * std::numbers::pi * (wv.fy * y + wv.fx * x) + wv.phase);
        img(r, c) += amp * t;
      }
  }
  if (cfg.noise_sigma > 0) {
    Rng rng(derive_seed(seed, 2));
    for (double& v : img.values()) {
      const double re = v + cfg.noise_sigma * rng.normal();
      const double im = cfg.noise_sigma * rng.normal();
      v = std::sqrt(re * re + im * im);
    }
  }
  for (double& v : img.values()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

}  // namespace ensr
