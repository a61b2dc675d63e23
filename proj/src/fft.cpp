#include "ensr/fft.hpp"

#include <cmath>
#include <numbers>

#include "ensr/error.hpp"

namespace ensr::fft {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

namespace {

std::size_t next_pow2(std::size_t n) {
  std::size_t m = 1;
  while (m < n) m <<= 1;
  return m;
}

}  // namespace

Plan::Plan(std::size_t n) : n_(n), pow2_(is_power_of_two(n)) {
  if (n == 0) throw DimensionError("fft: zero-length transform");
  m_ = pow2_ ? n : next_pow2(2 * n - 1);

  bitrev_.resize(m_);
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < m_) ++bits;
  for (std::size_t i = 0; i < m_; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b)
      if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
    bitrev_[i] = r;
  }
  twiddle_.resize(m_ / 2);
  for (std::size_t k = 0; k < m_ / 2; ++k) {
    const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(m_);
    twiddle_[k] = {std::cos(a), std::sin(a)};
  }

  if (!pow2_) {
    chirp_.resize(n_);
    for (std::size_t k = 0; k < n_; ++k) {
      // k^2 mod 2n keeps the phase argument small and exact.
      const std::size_t k2 = (k * k) % (2 * n_);
      const double a = -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n_);
      chirp_[k] = {std::cos(a), std::sin(a)};
    }
    chirp_kernel_.assign(m_, Complex{});
    chirp_kernel_[0] = std::conj(chirp_[0]);
    for (std::size_t k = 1; k < n_; ++k) {
      chirp_kernel_[k] = std::conj(chirp_[k]);
      chirp_kernel_[m_ - k] = std::conj(chirp_[k]);
    }
    radix2(chirp_kernel_, false);
  }
}

void Plan::run(std::span<Complex> x, bool inverse) const {
  if (x.size() != n_) throw DimensionError("fft: buffer length does not match plan");
  if (pow2_)
    radix2(x, inverse);
  else
    bluestein(x, inverse);
}

void Plan::radix2(std::span<Complex> x, bool inverse) const {
  const std::size_t m = x.size();
  for (std::size_t i = 0; i < m; ++i)
    if (i < bitrev_[i]) std::swap(x[i], x[bitrev_[i]]);
  for (std::size_t len = 2; len <= m; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = m / len;
    for (std::size_t start = 0; start < m; start += len) {
      for (std::size_t j = 0; j < half; ++j) {
        Complex w = twiddle_[j * step];
        if (inverse) w = std::conj(w);
        const Complex u = x[start + j];
        const Complex v = x[start + j + half] * w;
        x[start + j] = u + v;
        x[start + j + half] = u - v;
      }
    }
  }
}

void Plan::bluestein(std::span<Complex> x, bool inverse) const {
  // The inverse transform is conj(F(conj(x))).
  std::vector<Complex> a(m_, Complex{});
  for (std::size_t k = 0; k < n_; ++k) {
    const Complex v = inverse ? std::conj(x[k]) : x[k];
    a[k] = v * chirp_[k];
  }
  radix2(a, false);
  for (std::size_t k = 0; k < m_; ++k) a[k] *= chirp_kernel_[k];
  radix2(a, true);
  const double inv_m = 1.0 / static_cast<double>(m_);
  for (std::size_t k = 0; k < n_; ++k) {
    const Complex v = a[k] * inv_m * chirp_[k];
    x[k] = inverse ? std::conj(v) : v;
  }
}

void transform_2d(std::vector<Complex>& data, std::size_t rows, std::size_t cols, bool inverse) {
  if (data.size() != rows * cols) throw DimensionError("fft2: buffer size mismatch");
  const Plan row_plan(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    std::span<Complex> row(data.data() + r * cols, cols);
    inverse ? row_plan.inverse(row) : row_plan.forward(row);
  }
  const Plan col_plan(rows);
  std::vector<Complex> column(rows);
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) column[r] = data[r * cols + c];
    inverse ? col_plan.inverse(column) : col_plan.forward(column);
    for (std::size_t r = 0; r < rows; ++r) data[r * cols + c] = column[r];
  }
}

}  // namespace ensr::fft
