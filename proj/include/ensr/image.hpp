#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace ensr {

/// Real-valued 2D intensity grid in row-major order.
///
/// `intensity_max` is the declared dynamic range L (e.g. 1.0 for phantoms,
/// 255 after quantization). It is the peak used by PSNR/SSIM.
class Image {
 public:
  Image() = default;
  Image(std::size_t height, std::size_t width, double intensity_max = 1.0);
  Image(std::size_t height, std::size_t width, std::vector<double> data,
        double intensity_max = 1.0);

  static Image filled(std::size_t height, std::size_t width, double value,
                      double intensity_max = 1.0);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  double intensity_max() const { return intensity_max_; }
  void set_intensity_max(double l) { intensity_max_ = l; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * width_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * width_ + c]; }

  /// Replicate-clamped access; rows/cols may be out of range.
  double clamped(long r, long c) const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool all_finite() const;
  /// Throws DataError when any value is NaN/Inf.
  void check_finite(std::string_view what) const;

  double min() const;
  double max() const;
  double mean() const;

  friend bool operator==(const Image& a, const Image& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.data_ == b.data_;
  }

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> data_;
  double intensity_max_ = 1.0;
};

/// Throws DimensionError unless both images have identical dims.
void require_same_dims(const Image& a, const Image& b, std::string_view what);

/// Maximum absolute pixel difference. Dims must match.
double max_abs_diff(const Image& a, const Image& b);

struct PatchOffset {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const PatchOffset&, const PatchOffset&) = default;
};

/// Regular grid of square patches cut from one source image.
struct PatchGrid {
  std::size_t patch_size = 0;
  std::size_t stride = 0;
  std::size_t source_height = 0;
  std::size_t source_width = 0;
  std::vector<Image> patches;
  std::vector<PatchOffset> offsets;

  std::size_t rows() const;
  std::size_t cols() const;
};

/// Expected patch count for a valid (H, W, patch, stride) configuration.
std::size_t patch_count(std::size_t height, std::size_t width, std::size_t patch_size,
                        std::size_t stride);

/// Row-major overlapping patches. (H - p) and (W - p) must be multiples of
/// the stride.
PatchGrid patchify(const Image& img, std::size_t patch_size, std::size_t stride);

/// Reassembles a grid, averaging overlaps with uniform weights.
Image unpatchify(const PatchGrid& grid);

struct QuantizeResult {
  Image image;
  bool degenerate = false;  ///< input was constant, everything mapped to 0
};

/// Affine map of [min, max] onto [0, levels-1], rounded to nearest integer.
QuantizeResult quantize(const Image& img, int levels = 256);

/// Same as quantize but with an explicit source range; values outside it are
/// clamped. Used to put a prediction on its reference's intensity scale.
Image quantize_with_range(const Image& img, double lo, double hi, int levels = 256);

/// True when every value is an integer in [0, 255].
bool is_quantized_8bit(const Image& img);

/// The five processing algorithms, in the channel order used everywhere
/// downstream.
enum class SRMethod : int { Zip = 0, Bicubic = 1, Nedi = 2, SparseCoding = 3, APlus = 4 };

inline constexpr std::array<SRMethod, 5> kAllMethods = {
    SRMethod::Zip, SRMethod::Bicubic, SRMethod::Nedi, SRMethod::SparseCoding,
    SRMethod::APlus};

/// The three-input ablation set.
inline constexpr std::array<SRMethod, 3> kInterpolationMethods = {
    SRMethod::Zip, SRMethod::Bicubic, SRMethod::Nedi};

/// 1-based index i used in the method numbering (ZIP = 1 ... A+ = 5).
inline int method_index(SRMethod m) { return static_cast<int>(m) + 1; }

/// Lowercase identifier: zip, bi, nedi, sc, aplus.
std::string_view method_name(SRMethod m);
SRMethod parse_method(std::string_view name);

}  // namespace ensr
