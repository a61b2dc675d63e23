#include "ensr/interpolation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "ensr/error.hpp"

namespace ensr {

double keys_kernel(double x, double a) {
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

namespace {

struct Taps {
  long first = 0;
  std::array<double, 4> w{};
};

// Four cubic-convolution taps for an output coordinate along one axis.
Taps taps_for(std::size_t out_index) {
  const double src = (static_cast<double>(out_index) + 0.5) / 2.0 - 0.5;
  const double base = std::floor(src);
  const double t = src - base;
  Taps taps;
  taps.first = static_cast<long>(base) - 1;
  for (int k = 0; k < 4; ++k) taps.w[k] = keys_kernel(t - static_cast<double>(k - 1));
  return taps;
}

void require_factor_two(int factor, const char* what) {
  if (factor != 2) throw DimensionError(std::string(what) + ": only factor 2 is supported");
}

}  // namespace

Image bicubic_upscale(const Image& lr, int factor) {
  require_factor_two(factor, "bicubic_upscale");
  if (lr.height() < 4 || lr.width() < 4)
    throw DimensionError("bicubic_upscale: input must be at least 4x4");
  const std::size_t H = lr.height() * 2;
  const std::size_t W = lr.width() * 2;

  // Horizontal pass into an lr.height() x W buffer, then vertical.
  Image horiz(lr.height(), W, lr.intensity_max());
  for (std::size_t c = 0; c < W; ++c) {
    const Taps t = taps_for(c);
    for (std::size_t r = 0; r < lr.height(); ++r) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += t.w[k] * lr.clamped(static_cast<long>(r), t.first + k);
      horiz(r, c) = acc;
    }
  }
  Image out(H, W, lr.intensity_max());
  for (std::size_t r = 0; r < H; ++r) {
    const Taps t = taps_for(r);
    for (std::size_t c = 0; c < W; ++c) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += t.w[k] * horiz.clamped(t.first + k, static_cast<long>(c));
      out(r, c) = acc;
    }
  }
  return out;
}

bool solve_four_tap(const std::vector<std::array<double, 4>>& neighbors,
                    const std::vector<double>& targets, double max_condition,
                    std::array<double, 4>& weights) {
  Eigen::Matrix4d gram = Eigen::Matrix4d::Zero();
  Eigen::Vector4d rhs = Eigen::Vector4d::Zero();
  for (std::size_t s = 0; s < neighbors.size(); ++s) {
    const Eigen::Map<const Eigen::Vector4d> row(neighbors[s].data());
    gram.noalias() += row * row.transpose();
    rhs.noalias() += row * targets[s];
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(gram, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues()(0);
  const double hi = eig.eigenvalues()(3);
  if (!(hi > 0.0) || !(lo > 0.0) || hi / lo > max_condition) return false;
  const Eigen::Vector4d a = gram.ldlt().solve(rhs);
  if (!a.allFinite()) return false;
  for (int k = 0; k < 4; ++k) weights[k] = a(k);
  return true;
}

namespace {

// Reflect-101 indexing keeps lattice parity, so a known pixel's mirrored
// neighbor is also known.
long reflect(long i, long n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

double estimate(const std::array<double, 4>& nb, const std::vector<std::array<double, 4>>& samples,
                const std::vector<double>& targets, double fallback, const NediOptions& opts,
                NediStats& stats) {
  std::array<double, 4> w{};
  if (!solve_four_tap(samples, targets, opts.max_condition, w)) {
    ++stats.fallback;
    return fallback;
  }
  ++stats.estimated;
  double v = w[0] * nb[0] + w[1] * nb[1] + w[2] * nb[2] + w[3] * nb[3];
  if (opts.clamp_to_neighbors) {
    const auto [lo, hi] = std::minmax_element(nb.begin(), nb.end());
    v = std::clamp(v, *lo, *hi);
  }
  return v;
}

}  // namespace

Image nedi_upscale(const Image& lr, int factor, const NediOptions& opts, NediStats* stats_out) {
  require_factor_two(factor, "nedi_upscale");
  if (lr.height() < 8 || lr.width() < 8)
    throw DimensionError("nedi_upscale: input must be at least 8x8");
  NediStats stats;
  const long h = static_cast<long>(lr.height());
  const long w = static_cast<long>(lr.width());
  const long H = 2 * h;
  const long W = 2 * w;
  Image out(static_cast<std::size_t>(H), static_cast<std::size_t>(W), lr.intensity_max());
  for (long i = 0; i < h; ++i)
    for (long j = 0; j < w; ++j) out(2 * i, 2 * j) = lr(i, j);

  const long lo_off = -(opts.window / 2 - 1);
  const long hi_off = opts.window / 2;
  std::vector<std::array<double, 4>> samples;
  std::vector<double> targets;
  samples.reserve(static_cast<std::size_t>(4 * opts.window * opts.window));
  targets.reserve(samples.capacity());

  // Pass 1: centers of LR cells from the four diagonal LR neighbors. The
  // training pairs relate each LR pixel to its diagonal LR neighbors.
  for (long i = 0; i < h; ++i) {
    for (long j = 0; j < w; ++j) {
      samples.clear();
      targets.clear();
      for (long k = i + lo_off; k <= i + hi_off; ++k) {
        for (long l = j + lo_off; l <= j + hi_off; ++l) {
          targets.push_back(lr.clamped(k, l));
          samples.push_back({lr.clamped(k - 1, l - 1), lr.clamped(k - 1, l + 1),
                             lr.clamped(k + 1, l - 1), lr.clamped(k + 1, l + 1)});
        }
      }
      const std::array<double, 4> nb = {lr.clamped(i, j), lr.clamped(i, j + 1),
                                         lr.clamped(i + 1, j), lr.clamped(i + 1, j + 1)};
      const double bilinear = 0.25 * (nb[0] + nb[1] + nb[2] + nb[3]);
      out(2 * i + 1, 2 * j + 1) = estimate(nb, samples, targets, bilinear, opts, stats);
    }
  }

  // Pass 2: remaining pixels (odd parity) from axis neighbors, trained on
  // known pixels against their axis neighbors at distance two.
  auto known = [&](long r, long c) { return out(static_cast<std::size_t>(reflect(r, H)),
                                                static_cast<std::size_t>(reflect(c, W))); };
  for (long r = 0; r < H; ++r) {
    for (long c = (r + 1) % 2; c < W; c += 2) {
      samples.clear();
      targets.clear();
      for (long qr = r + 2 * lo_off; qr <= r + 2 * hi_off; ++qr) {
        for (long qc = c + 2 * lo_off; qc <= c + 2 * hi_off; ++qc) {
          if ((qr + qc) % 2 != 0) continue;
          targets.push_back(known(qr, qc));
          samples.push_back({known(qr - 2, qc), known(qr + 2, qc), known(qr, qc - 2),
                             known(qr, qc + 2)});
        }
      }
      const std::array<double, 4> nb = {known(r - 1, c), known(r + 1, c), known(r, c - 1),
                                         known(r, c + 1)};
      double bilinear = 0.0;
      if (r % 2 == 0)  // between LR (r/2, (c-1)/2) and (r/2, (c+1)/2)
        bilinear = 0.5 * (lr.clamped(r / 2, (c - 1) / 2) + lr.clamped(r / 2, (c + 1) / 2));
      else
        bilinear = 0.5 * (lr.clamped((r - 1) / 2, c / 2) + lr.clamped((r + 1) / 2, c / 2));
      out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) =
          estimate(nb, samples, targets, bilinear, opts, stats);
    }
  }
  if (stats_out) *stats_out = stats;
  return out;
}

}  // namespace ensr
