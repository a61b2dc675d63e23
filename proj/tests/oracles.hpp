#pragma once
// Independent reference implementations used by the tests. Everything here
// is written the slow, obvious way and shares no code with the library.

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <vector>

#include "ensr/image.hpp"
#include "ensr/interpolation.hpp"
#include "ensr/nn/graph.hpp"
#include "ensr/random.hpp"

namespace oracle {

using ensr::Image;
using Complex = std::complex<double>;

inline Image random_image(std::size_t h, std::size_t w, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  ensr::Rng rng(seed);
  Image img(h, w);
  for (double& v : img.values()) v = rng.uniform(lo, hi);
  return img;
}

// Direct 2D DFT, X[u, v] = sum x[r, c] exp(-2 pi i (u r / H + v c / W)).
inline Complex dft_at(const Image& x, long u, long v) {
  const double H = static_cast<double>(x.height()), W = static_cast<double>(x.width());
  Complex s = 0.0;
  for (std::size_t r = 0; r < x.height(); ++r)
    for (std::size_t c = 0; c < x.width(); ++c) {
      const double ph = -2.0 * std::numbers::pi * (static_cast<double>(u) * r / H + static_cast<double>(v) * c / W);
      s += x(r, c) * Complex(std::cos(ph), std::sin(ph));
    }
  return s;
}

// Keeps frequencies u in [-H/4, H/4), v in [-W/4, W/4) and resynthesizes on
// the half grid: y[r, c] = (1 / HW) sum X[u, v] exp(2 pi i (u r / h + v c / w)).
inline Image downsample_dft(const Image& x) {
  const long H = static_cast<long>(x.height()), W = static_cast<long>(x.width());
  const long h = H / 2, w = W / 2;
  std::vector<Complex> X;
  for (long u = -H / 4; u < H / 4; ++u)
    for (long v = -W / 4; v < W / 4; ++v) X.push_back(dft_at(x, u, v));
  Image y(static_cast<std::size_t>(h), static_cast<std::size_t>(w));
  for (long r = 0; r < h; ++r)
    for (long c = 0; c < w; ++c) {
      Complex s = 0.0;
      std::size_t k = 0;
      for (long u = -H / 4; u < H / 4; ++u)
        for (long v = -W / 4; v < W / 4; ++v, ++k) {
          const double ph = 2.0 * std::numbers::pi * (static_cast<double>(u * r) / h + static_cast<double>(v * c) / w);
          s += X[k] * Complex(std::cos(ph), std::sin(ph));
        }
      y(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = s.real() / static_cast<double>(H * W);
    }
  return y;
}

// Keys cubic kernel, a = -1/2, straight from its piecewise definition.
inline double keys(double x) {
  const double a = -0.5, t = std::fabs(x);
  if (t <= 1) return (a + 2) * t * t * t - (a + 3) * t * t + 1;
  if (t < 2) return a * t * t * t - 5 * a * t * t + 8 * a * t - 4 * a;
  return 0.0;
}

// 2x bicubic with centers at (y + 0.5) / 2 - 0.5 and replicated borders,
// evaluated as a full 4x4 tensor-product sum.
inline Image bicubic2x(const Image& lr) {
  const long h = static_cast<long>(lr.height()), w = static_cast<long>(lr.width());
  Image out(lr.height() * 2, lr.width() * 2);
  for (long Y = 0; Y < 2 * h; ++Y)
    for (long X = 0; X < 2 * w; ++X) {
      const double sy = (Y + 0.5) / 2.0 - 0.5, sx = (X + 0.5) / 2.0 - 0.5;
      const long y0 = static_cast<long>(std::floor(sy)), x0 = static_cast<long>(std::floor(sx));
      double s = 0.0;
      for (long i = y0 - 1; i <= y0 + 2; ++i)
        for (long j = x0 - 1; j <= x0 + 2; ++j) {
          const long ci = std::clamp(i, 0L, h - 1), cj = std::clamp(j, 0L, w - 1);
          s += keys(sy - static_cast<double>(i)) * keys(sx - static_cast<double>(j)) *
               lr(static_cast<std::size_t>(ci), static_cast<std::size_t>(cj));
        }
      out(static_cast<std::size_t>(Y), static_cast<std::size_t>(X)) = s;
    }
  return out;
}

// Cross-correlation with zero padding; x (N, Ci, H, W), w (Co, Ci, k, k).
inline std::vector<double> conv2d(const std::vector<double>& x, std::size_t n, std::size_t ci, std::size_t h,
                                  std::size_t wd, const std::vector<double>& w, std::size_t co, std::size_t k,
                                  std::size_t stride, std::size_t pad, std::size_t& oh, std::size_t& ow) {
  oh = (h + 2 * pad - k) / stride + 1;
  ow = (wd + 2 * pad - k) / stride + 1;
  std::vector<double> y(n * co * oh * ow, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t c = 0; c < ow; ++c) {
          double s = 0.0;
          for (std::size_t i = 0; i < ci; ++i)
            for (std::size_t a = 0; a < k; ++a)
              for (std::size_t bb = 0; bb < k; ++bb) {
                const long rr = static_cast<long>(r * stride + a) - static_cast<long>(pad);
                const long cc = static_cast<long>(c * stride + bb) - static_cast<long>(pad);
                if (rr < 0 || cc < 0 || rr >= static_cast<long>(h) || cc >= static_cast<long>(wd)) continue;
                s += w[((o * ci + i) * k + a) * k + bb] *
                     x[((b * ci + i) * h + static_cast<std::size_t>(rr)) * wd + static_cast<std::size_t>(cc)];
              }
          y[((b * co + o) * oh + r) * ow + c] = s;
        }
  return y;
}

// SSIM by explicit per-window sums with a normalized 2D Gaussian.
inline double ssim(const Image& x, const Image& y, int win = 11, double sigma = 1.5, double k1 = 0.01,
                   double k2 = 0.03) {
  const double L = y.intensity_max();
  const double c1 = (k1 * L) * (k1 * L), c2 = (k2 * L) * (k2 * L);
  std::vector<double> g(static_cast<std::size_t>(win * win));
  double tot = 0.0;
  const double m = (win - 1) / 2.0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      const double v = std::exp(-((i - m) * (i - m) + (j - m) * (j - m)) / (2 * sigma * sigma));
      g[static_cast<std::size_t>(i * win + j)] = v;
      tot += v;
    }
  for (double& v : g) v /= tot;
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r + static_cast<std::size_t>(win) <= x.height(); ++r)
    for (std::size_t c = 0; c + static_cast<std::size_t>(win) <= x.width(); ++c) {
      double mx = 0, my = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          const double wgt = g[static_cast<std::size_t>(i * win + j)];
          mx += wgt * x(r + i, c + j);
          my += wgt * y(r + i, c + j);
        }
      double vx = 0, vy = 0, cv = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          const double wgt = g[static_cast<std::size_t>(i * win + j)];
          const double dx = x(r + i, c + j) - mx, dy = y(r + i, c + j) - my;
          vx += wgt * dx * dx;
          vy += wgt * dy * dy;
          cv += wgt * dx * dy;
        }
      acc += (2 * mx * my + c1) * (2 * cv + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return acc / static_cast<double>(count);
}

// Central-difference gradient check of a scalar function of graph leaves.
// Returns ||analytic - numeric|| / max(||analytic||, ||numeric||) over the
// checked coordinates (all of them, or `max_coords` seeded picks per leaf).
// Functions that differentiate internally need `record` so the finite
// difference evaluations still build their inner graphs.
inline double gradcheck(const std::function<ensr::nn::Var()>& f, const std::vector<ensr::nn::Var>& wrt,
                        std::size_t max_coords = 0, double h = 1e-6, std::uint64_t seed = 5, bool record = false) {
  using namespace ensr::nn;
  const Var out = f();
  const std::vector<Var> g = grad(out, wrt);
  double diff = 0.0, na = 0.0, nn_ = 0.0;
  ensr::Rng rng(seed);
  GradModeGuard mode(record);
  for (std::size_t p = 0; p < wrt.size(); ++p) {
    std::vector<double>& v = wrt[p].node_ptr()->value.data;
    std::vector<std::size_t> coords;
    if (max_coords == 0 || v.size() <= max_coords) {
      for (std::size_t i = 0; i < v.size(); ++i) coords.push_back(i);
    } else {
      for (std::size_t i = 0; i < max_coords; ++i) coords.push_back(rng.below(v.size()));
    }
    for (std::size_t i : coords) {
      const double keep = v[i];
      v[i] = keep + h;
      const double fp = f().value()[0];
      v[i] = keep - h;
      const double fm = f().value()[0];
      v[i] = keep;
      const double num = (fp - fm) / (2 * h);
      const double ana = g[p].value()[i];
      diff += (ana - num) * (ana - num);
      na += ana * ana;
      nn_ += num * num;
    }
  }
  const double scale = std::sqrt(std::max(na, nn_));
  return scale > 0 ? std::sqrt(diff) / scale : std::sqrt(diff);
}

}  // namespace oracle
