#include "ensr/kspace.hpp"

#include <cmath>
#include <string>

#include "ensr/error.hpp"
#include "ensr/fft.hpp"

namespace ensr {
namespace {

using Complex = std::complex<double>;

void require_even(std::size_t h, std::size_t w, const char* what) {
  if (h < 2 || w < 2 || h % 2 != 0 || w % 2 != 0) {
    throw DimensionError(std::string(what) + ": dims " + std::to_string(h) + "x" +
                         std::to_string(w) + " must be even and >= 2");
  }
}

// Swaps halves along both axes; for even sizes this is its own inverse.
std::vector<Complex> shift_half(const std::vector<Complex>& in, std::size_t h, std::size_t w) {
  std::vector<Complex> out(in.size());
  for (std::size_t r = 0; r < h; ++r) {
    const std::size_t rr = (r + h / 2) % h;
    for (std::size_t c = 0; c < w; ++c) out[rr * w + (c + w / 2) % w] = in[r * w + c];
  }
  return out;
}

}  // namespace

KSpaceGrid fft2(const Image& img) {
  require_even(img.height(), img.width(), "fft2");
  const std::size_t h = img.height();
  const std::size_t w = img.width();
  std::vector<Complex> buf(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) buf[i] = img.values()[i];
  fft::transform_2d(buf, h, w, false);
  const double scale = 1.0 / std::sqrt(static_cast<double>(h * w));
  for (auto& v : buf) v *= scale;
  return KSpaceGrid{h, w, shift_half(buf, h, w), FftNorm::Unitary};
}

InverseResult ifft2(const KSpaceGrid& k, double intensity_max) {
  require_even(k.height, k.width, "ifft2");
  if (k.data.size() != k.height * k.width) throw DimensionError("ifft2: grid data length mismatch");
  std::vector<Complex> buf = shift_half(k.data, k.height, k.width);
  fft::transform_2d(buf, k.height, k.width, true);
  const double scale = 1.0 / std::sqrt(static_cast<double>(k.height * k.width));
  InverseResult out{Image(k.height, k.width, intensity_max), 0.0};
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const Complex v = buf[i] * scale;
    out.image.values()[i] = v.real();
    out.max_imag = std::max(out.max_imag, std::abs(v.imag()));
  }
  return out;
}

Image downsample_kspace(const Image& hr) {
  const std::size_t H = hr.height();
  const std::size_t W = hr.width();
  if (H < 4 || W < 4 || H % 4 != 0 || W % 4 != 0) {
    throw DimensionError("downsample_kspace: dims " + std::to_string(H) + "x" + std::to_string(W) +
                         " must be multiples of 4");
  }
  const KSpaceGrid full = fft2(hr);
  const std::size_t h = H / 2;
  const std::size_t w = W / 2;
  KSpaceGrid crop{h, w, std::vector<Complex>(h * w), FftNorm::Unitary};
  // sqrt(hw / HW): keeps the DC-to-intensity ratio across grid sizes.
  const double amplitude = 0.5;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) crop.at(r, c) = full.at(r + H / 4, c + W / 4) * amplitude;
  return ifft2(crop, hr.intensity_max()).image;
}

Image zip_upscale(const Image& lr, std::size_t target_height, std::size_t target_width) {
  const std::size_t h = lr.height();
  const std::size_t w = lr.width();
  require_even(h, w, "zip_upscale");
  if (target_height != 2 * h || target_width != 2 * w) {
    throw DimensionError("zip_upscale: target " + std::to_string(target_height) + "x" +
                         std::to_string(target_width) + " is not twice " + std::to_string(h) +
                         "x" + std::to_string(w));
  }
  const KSpaceGrid small = fft2(lr);
  const std::size_t H = target_height;
  const std::size_t W = target_width;
  KSpaceGrid big{H, W, std::vector<Complex>(H * W), FftNorm::Unitary};
  const double amplitude = 2.0;
  const long hh = static_cast<long>(h / 2);
  const long hw = static_cast<long>(w / 2);
  // Closed band [-h/2, h/2] x [-w/2, w/2]; the +h/2 (+w/2) edge repeats the
  // periodic LR Nyquist sample so the big spectrum is Hermitian.
  for (long u = -hh; u <= hh; ++u) {
    const std::size_t sr = static_cast<std::size_t>(((u + hh) % static_cast<long>(h) + static_cast<long>(h)) %
                                                    static_cast<long>(h));
    const std::size_t br = static_cast<std::size_t>(u + static_cast<long>(H / 2));
    for (long v = -hw; v <= hw; ++v) {
      const std::size_t sc = static_cast<std::size_t>(((v + hw) % static_cast<long>(w) + static_cast<long>(w)) %
                                                      static_cast<long>(w));
      const std::size_t bc = static_cast<std::size_t>(v + static_cast<long>(W / 2));
      big.at(br, bc) = small.at(sr, sc) * amplitude;
    }
  }
  return ifft2(big, lr.intensity_max()).image;
}

}  // namespace ensr
