#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "ensr/image.hpp"

namespace ensr {

enum class FftNorm { Unitary };

/// Complex 2D frequency grid, DC-centered: the zero frequency sits at
/// (height/2, width/2), so "central" is a literal array-center crop.
struct KSpaceGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::complex<double>> data;
  FftNorm norm = FftNorm::Unitary;

  std::complex<double>& at(std::size_t r, std::size_t c) { return data[r * width + c]; }
  const std::complex<double>& at(std::size_t r, std::size_t c) const { return data[r * width + c]; }
};

struct InverseResult {
  Image image;
  double max_imag = 0.0;  ///< largest |imaginary part| discarded
};

/// Unitary (Parseval-preserving) 2D DFT, DC-centered. Even dims >= 2.
KSpaceGrid fft2(const Image& img);

/// Inverse of fft2; returns the real part and reports the imaginary residual.
InverseResult ifft2(const KSpaceGrid& k, double intensity_max = 1.0);

/// Frequency-domain 2x degradation: keeps the central H/2 x W/2 block of
/// k-space and transforms it back on the smaller grid. Amplitudes are
/// rescaled so a constant image keeps its value. H and W must be multiples
/// of 4.
Image downsample_kspace(const Image& hr);

/// Zero-filled k-space enlargement to exactly twice the input dims. The LR
/// spectrum is embedded centrally (with its Nyquist row/column mirrored onto
/// the opposite band edge so the result stays real) and everything else is
/// zero. downsample_kspace(zip_upscale(x)) == x up to FFT roundoff.
Image zip_upscale(const Image& lr, std::size_t target_height, std::size_t target_width);

}  // namespace ensr
