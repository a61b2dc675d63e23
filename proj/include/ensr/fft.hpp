#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace ensr::fft {

using Complex = std::complex<double>;

/// Unnormalized 1D DFT of a fixed length. Power-of-two lengths use an
/// iterative radix-2 Cooley-Tukey transform; other lengths go through
/// Bluestein's chirp-z reformulation on a padded power-of-two grid.
///
/// A plan is immutable after construction and may be shared across threads.
class Plan {
 public:
  explicit Plan(std::size_t n);

  std::size_t size() const { return n_; }

  /// In-place transform, sign -1 (forward) or +1 (inverse, no 1/n scale).
  void forward(std::span<Complex> x) const { run(x, false); }
  void inverse(std::span<Complex> x) const { run(x, true); }

 private:
  void run(std::span<Complex> x, bool inverse) const;
  void radix2(std::span<Complex> x, bool inverse) const;
  void bluestein(std::span<Complex> x, bool inverse) const;

  std::size_t n_;
  bool pow2_;
  // radix-2 state (for n_ when pow2_, otherwise for the padded length)
  std::size_t m_ = 0;
  std::vector<std::size_t> bitrev_;
  std::vector<Complex> twiddle_;  // exp(-2*pi*i*k/m), k < m/2
  // Bluestein state
  std::vector<Complex> chirp_;         // exp(-i*pi*k^2/n)
  std::vector<Complex> chirp_kernel_;  // FFT of the conjugate chirp, padded to m
};

/// Unnormalized 2D transform of a row-major rows x cols array, in place.
void transform_2d(std::vector<Complex>& data, std::size_t rows, std::size_t cols, bool inverse);

bool is_power_of_two(std::size_t n);

}  // namespace ensr::fft
