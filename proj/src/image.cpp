#include "ensr/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ensr/error.hpp"

namespace ensr {

Image::Image(std::size_t height, std::size_t width, double intensity_max)
    : height_(height), width_(width), data_(height * width, 0.0), intensity_max_(intensity_max) {}

Image::Image(std::size_t height, std::size_t width, std::vector<double> data,
             double intensity_max)
    : height_(height), width_(width), data_(std::move(data)), intensity_max_(intensity_max) {
  if (data_.size() != height_ * width_) {
    throw DimensionError("image data length " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(height_) + "x" +
                         std::to_string(width_));
  }
}

Image Image::filled(std::size_t height, std::size_t width, double value, double intensity_max) {
  return Image(height, width, std::vector<double>(height * width, value), intensity_max);
}

double Image::clamped(long r, long c) const {
  r = std::clamp<long>(r, 0, static_cast<long>(height_) - 1);
  c = std::clamp<long>(c, 0, static_cast<long>(width_) - 1);
  return data_[static_cast<std::size_t>(r) * width_ + static_cast<std::size_t>(c)];
}

bool Image::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Image::check_finite(std::string_view what) const {
  if (!all_finite()) throw DataError(std::string(what) + ": image contains NaN/Inf");
}

double Image::min() const { return *std::min_element(data_.begin(), data_.end()); }
double Image::max() const { return *std::max_element(data_.begin(), data_.end()); }
double Image::mean() const {
  return std::accumulate(data_.begin(), data_.end(), 0.0) / static_cast<double>(data_.size());
}

void require_same_dims(const Image& a, const Image& b, std::string_view what) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw DimensionError(std::string(what) + ": dims " + std::to_string(a.height()) + "x" +
                         std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                         std::to_string(b.width()));
  }
}

double max_abs_diff(const Image& a, const Image& b) {
  require_same_dims(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

std::size_t PatchGrid::rows() const { return (source_height - patch_size) / stride + 1; }
std::size_t PatchGrid::cols() const { return (source_width - patch_size) / stride + 1; }

std::size_t patch_count(std::size_t height, std::size_t width, std::size_t patch_size,
                        std::size_t stride) {
  return ((height - patch_size) / stride + 1) * ((width - patch_size) / stride + 1);
}

PatchGrid patchify(const Image& img, std::size_t patch_size, std::size_t stride) {
  if (patch_size == 0 || stride == 0) throw DimensionError("patchify: patch size and stride must be positive");
  if (patch_size > img.height() || patch_size > img.width()) {
    throw DimensionError("patchify: patch size " + std::to_string(patch_size) +
                         " exceeds image " + std::to_string(img.height()) + "x" +
                         std::to_string(img.width()));
  }
  if ((img.height() - patch_size) % stride != 0) {
    throw DimensionError("patchify: height axis: (" + std::to_string(img.height()) + " - " +
                         std::to_string(patch_size) + ") not divisible by stride " +
                         std::to_string(stride));
  }
  if ((img.width() - patch_size) % stride != 0) {
    throw DimensionError("patchify: width axis: (" + std::to_string(img.width()) + " - " +
                         std::to_string(patch_size) + ") not divisible by stride " +
                         std::to_string(stride));
  }
  PatchGrid grid;
  grid.patch_size = patch_size;
  grid.stride = stride;
  grid.source_height = img.height();
  grid.source_width = img.width();
  for (std::size_t r0 = 0; r0 + patch_size <= img.height(); r0 += stride) {
    for (std::size_t c0 = 0; c0 + patch_size <= img.width(); c0 += stride) {
      Image p(patch_size, patch_size, img.intensity_max());
      for (std::size_t r = 0; r < patch_size; ++r)
        for (std::size_t c = 0; c < patch_size; ++c) p(r, c) = img(r0 + r, c0 + c);
      grid.patches.push_back(std::move(p));
      grid.offsets.push_back({r0, c0});
    }
  }
  return grid;
}

Image unpatchify(const PatchGrid& grid) {
  if (grid.patches.size() != grid.offsets.size())
    throw DimensionError("unpatchify: patch/offset count mismatch");
  if (grid.patches.empty()) throw DimensionError("unpatchify: empty grid");
  const double lmax = grid.patches.front().intensity_max();
  Image sum(grid.source_height, grid.source_width, lmax);
  std::vector<double> weight(sum.size(), 0.0);
  for (std::size_t i = 0; i < grid.patches.size(); ++i) {
    const Image& p = grid.patches[i];
    const PatchOffset o = grid.offsets[i];
    if (p.height() != grid.patch_size || p.width() != grid.patch_size)
      throw DimensionError("unpatchify: patch " + std::to_string(i) + " is not " +
                           std::to_string(grid.patch_size) + "x" + std::to_string(grid.patch_size));
    if (o.row + grid.patch_size > grid.source_height || o.col + grid.patch_size > grid.source_width)
      throw DimensionError("unpatchify: patch " + std::to_string(i) + " lies outside the source");
    for (std::size_t r = 0; r < grid.patch_size; ++r) {
      for (std::size_t c = 0; c < grid.patch_size; ++c) {
        sum(o.row + r, o.col + c) += p(r, c);
        weight[(o.row + r) * grid.source_width + o.col + c] += 1.0;
      }
    }
  }
  for (std::size_t i = 0; i < sum.size(); ++i) {
    if (weight[i] == 0.0) throw DimensionError("unpatchify: grid does not cover the source");
    sum.values()[i] /= weight[i];
  }
  return sum;
}

QuantizeResult quantize(const Image& img, int levels) {
  img.check_finite("quantize");
  const double lo = img.min();
  const double hi = img.max();
  const double top = static_cast<double>(levels - 1);
  QuantizeResult out{Image(img.height(), img.width(), top), false};
  if (hi == lo) {
    out.degenerate = true;
    return out;
  }
  const double scale = top / (hi - lo);
  for (std::size_t i = 0; i < img.size(); ++i)
    out.image.values()[i] = std::round((img.values()[i] - lo) * scale);
  return out;
}

Image quantize_with_range(const Image& img, double lo, double hi, int levels) {
  img.check_finite("quantize");
  const double top = static_cast<double>(levels - 1);
  Image out(img.height(), img.width(), top);
  if (hi <= lo) return out;
  const double scale = top / (hi - lo);
  for (std::size_t i = 0; i < img.size(); ++i)
    out.values()[i] = std::clamp(std::round((img.values()[i] - lo) * scale), 0.0, top);
  return out;
}

bool is_quantized_8bit(const Image& img) {
  return std::all_of(img.values().begin(), img.values().end(), [](double v) {
    return v >= 0.0 && v <= 255.0 && v == std::floor(v);
  });
}

std::string_view method_name(SRMethod m) {
  switch (m) {
    case SRMethod::Zip: return "zip";
    case SRMethod::Bicubic: return "bi";
    case SRMethod::Nedi: return "nedi";
    case SRMethod::SparseCoding: return "sc";
    case SRMethod::APlus: return "aplus";
  }
  return "?";
}

SRMethod parse_method(std::string_view name) {
  for (SRMethod m : kAllMethods)
    if (method_name(m) == name) return m;
  if (name == "1") return SRMethod::Zip;
  if (name == "2") return SRMethod::Bicubic;
  if (name == "3") return SRMethod::Nedi;
  if (name == "4") return SRMethod::SparseCoding;
  if (name == "5") return SRMethod::APlus;
  throw ConfigError("unknown SR method '" + std::string(name) +
                    "' (expected zip|bi|nedi|sc|aplus or 1..5)");
}

}  // namespace ensr
