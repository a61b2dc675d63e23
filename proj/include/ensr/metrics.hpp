#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "ensr/image.hpp"

namespace ensr {

/// PSNR of identical images.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// 10 log10(L² / MSE) with L = ref.intensity_max().
double psnr(const Image& test, const Image& ref);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Mean SSIM over all fully contained Gaussian windows.
double ssim(const Image& test, const Image& ref, const SsimOptions& opts = {});

/// accuracy[t] = fraction of pixels with |test - ref| <= t, t = 0..255.
struct AccuracyCurve {
  std::array<double, 256> accuracy{};
};

/// Per-threshold pixel counts, so curves can be pooled across images.
struct AccuracyCounts {
  std::array<std::uint64_t, 256> within{};
  std::uint64_t total = 0;

  AccuracyCurve curve() const;
  AccuracyCounts& operator+=(const AccuracyCounts& o);
};

/// Both images must be 8-bit quantized (UsageError otherwise).
AccuracyCounts accuracy_counts(const Image& test, const Image& ref);
AccuracyCurve accuracy_curve(const Image& test, const Image& ref);

/// Puts an SR/reference pair on the reference's 0..255 scale: the
/// reference is quantized over its own range and the prediction with the
/// same affine map.
std::pair<Image, Image> quantize_pair(const Image& test, const Image& ref);

struct MeanStd {
  double mean = 0;
  double std = 0;  ///< sample standard deviation (n - 1)
};
MeanStd mean_std(const std::vector<double>& values);

struct ImageScore {
  std::string id;
  double psnr = 0;
  double ssim = 0;
};

struct CorpusSummary {
  std::vector<ImageScore> images;
  MeanStd psnr;
  MeanStd ssim;
  AccuracyCurve pooled;     ///< pixel-weighted over the whole corpus
  AccuracyCurve per_image;  ///< mean of per-image curves
  std::vector<std::string> unmatched;
};

struct EvalPair {
  std::string id;
  Image test;
  Image ref;
};
CorpusSummary evaluate_pairs(const std::vector<EvalPair>& pairs, const SsimOptions& opts = {});

/// Matches files across two trees. With empty names, files are paired by
/// identical relative path; otherwise `<pred_dir>/<id>/<pred_name>` is paired
/// with `<ref_dir>/<id>/<ref_name>`. Unmatched files are listed in the
/// summary. Refuses trees whose recorded corpus hashes differ.
CorpusSummary evaluate_corpus(const std::filesystem::path& pred_dir, const std::filesystem::path& ref_dir,
                              const std::string& pred_name = "", const std::string& ref_name = "",
                              const SsimOptions& opts = {});

std::string metrics_csv(const CorpusSummary& s);
std::string accuracy_csv(const AccuracyCurve& c);

}  // namespace ensr
