#include "ensr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ensr/error.hpp"
#include "ensr/image_io.hpp"

namespace ensr {
namespace fs = std::filesystem;

double psnr(const Image& test, const Image& ref) {
  require_same_dims(test, ref, "psnr");
  const double peak = ref.intensity_max();
  if (!(peak > 0.0)) throw UsageError("psnr: reference intensity_max must be positive");
  double sse = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double d = test.values()[i] - ref.values()[i];
    sse += d * d;
  }
  if (sse == 0.0) return kPsnrIdentical;
  const double mse = sse / static_cast<double>(ref.size());
  return 10.0 * std::log10(peak * peak / mse);
}

namespace {

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    const double x = i - c;
    w[static_cast<std::size_t>(i)] = std::exp(-x * x / (2.0 * sigma * sigma));
    total += w[static_cast<std::size_t>(i)];
  }
  for (double& v : w) v /= total;
  return w;
}

// Valid-mode separable filtering of a row-major h x w field.
std::vector<double> filter_valid(const std::vector<double>& in, std::size_t h, std::size_t w,
                                 const std::vector<double>& k) {
  const std::size_t n = k.size(), oh = h - n + 1, ow = w - n + 1;
  std::vector<double> rows(h * ow);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < ow; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += k[i] * in[r * w + c + i];
      rows[r * ow + c] = s;
    }
  std::vector<double> out(oh * ow);
  for (std::size_t r = 0; r < oh; ++r)
    for (std::size_t c = 0; c < ow; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += k[i] * rows[(r + i) * ow + c];
      out[r * ow + c] = s;
    }
  return out;
}

}  // namespace

double ssim(const Image& test, const Image& ref, const SsimOptions& opts) {
  require_same_dims(test, ref, "ssim");
  const auto win = static_cast<std::size_t>(opts.window);
  if (opts.window < 1 || test.height() < win || test.width() < win)
    throw DimensionError("ssim: images must be at least " + std::to_string(opts.window) + "x" +
                         std::to_string(opts.window));
  const double peak = ref.intensity_max();
  const double c1 = (opts.k1 * peak) * (opts.k1 * peak);
  const double c2 = (opts.k2 * peak) * (opts.k2 * peak);
  const std::vector<double> k = gaussian_window(opts.window, opts.sigma);
  const std::size_t h = test.height(), w = test.width(), n = test.size();
  const auto& x = test.values();
  const auto& y = ref.values();
  std::vector<double> xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, h, w, k), my = filter_valid(y, h, w, k);
  const auto sxx = filter_valid(xx, h, w, k), syy = filter_valid(yy, h, w, k), sxy = filter_valid(xy, h, w, k);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

AccuracyCurve AccuracyCounts::curve() const {
  AccuracyCurve c;
  for (std::size_t t = 0; t < 256; ++t)
    c.accuracy[t] = total ? static_cast<double>(within[t]) / static_cast<double>(total) : 0.0;
  return c;
}

AccuracyCounts& AccuracyCounts::operator+=(const AccuracyCounts& o) {
  for (std::size_t t = 0; t < 256; ++t) within[t] += o.within[t];
  total += o.total;
  return *this;
}

AccuracyCounts accuracy_counts(const Image& test, const Image& ref) {
  require_same_dims(test, ref, "accuracy_curve");
  if (!is_quantized_8bit(test) || !is_quantized_8bit(ref))
    throw UsageError("accuracy_curve: both images must be quantized to integers in [0, 255]");
  std::array<std::uint64_t, 256> hist{};
  for (std::size_t i = 0; i < ref.size(); ++i)
    ++hist[static_cast<std::size_t>(std::fabs(test.values()[i] - ref.values()[i]))];
  AccuracyCounts c;
  c.total = ref.size();
  std::uint64_t run = 0;
  for (std::size_t t = 0; t < 256; ++t) {
    run += hist[t];
    c.within[t] = run;
  }
  return c;
}

AccuracyCurve accuracy_curve(const Image& test, const Image& ref) { return accuracy_counts(test, ref).curve(); }

std::pair<Image, Image> quantize_pair(const Image& test, const Image& ref) {
  return {quantize_with_range(test, ref.min(), ref.max()), quantize_with_range(ref, ref.min(), ref.max())};
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd r;
  if (values.empty()) return r;
  const bool all_same = std::all_of(values.begin(), values.end(), [&](double v) { return v == values[0]; });
  if (all_same) return {values[0], 0.0};
  double s = 0.0;
  for (double v : values) s += v;
  r.mean = s / static_cast<double>(values.size());
  if (values.size() > 1) {
    double q = 0.0;
    for (double v : values) q += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(q / static_cast<double>(values.size() - 1));
  }
  return r;
}

CorpusSummary evaluate_pairs(const std::vector<EvalPair>& pairs, const SsimOptions& opts) {
  CorpusSummary s;
  std::vector<double> ps, ss;
  AccuracyCounts pooled;
  std::array<double, 256> mean_curve{};
  for (const EvalPair& p : pairs) {
    ImageScore sc{p.id, psnr(p.test, p.ref), ssim(p.test, p.ref, opts)};
    ps.push_back(sc.psnr);
    ss.push_back(sc.ssim);
    s.images.push_back(sc);
    const auto [qt, qr] = quantize_pair(p.test, p.ref);
    const AccuracyCounts c = accuracy_counts(qt, qr);
    pooled += c;
    const AccuracyCurve curve = c.curve();
    for (std::size_t t = 0; t < 256; ++t) mean_curve[t] += curve.accuracy[t];
  }
  s.psnr = mean_std(ps);
  s.ssim = mean_std(ss);
  s.pooled = pooled.curve();
  if (!pairs.empty())
    for (std::size_t t = 0; t < 256; ++t) s.per_image.accuracy[t] = mean_curve[t] / static_cast<double>(pairs.size());
  return s;
}

namespace {

bool is_image_file(const fs::path& p) {
  const auto ext = p.extension().string();
  return ext == ".raw" || ext == ".pgm";
}

// Looks for `name` in dir and its parent; returns the recorded corpus hash.
std::optional<std::uint64_t> recorded_hash(const fs::path& dir, const char* file, const char* key) {
  for (const fs::path& d : {dir, dir.parent_path()}) {
    std::ifstream in(d / file);
    if (!in) continue;
    try {
      nlohmann::json j;
      in >> j;
      if (j.contains(key)) return j.at(key).get<std::uint64_t>();
    } catch (const nlohmann::json::exception&) {
    }
    return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace

CorpusSummary evaluate_corpus(const fs::path& pred_dir, const fs::path& ref_dir, const std::string& pred_name,
                              const std::string& ref_name, const SsimOptions& opts) {
  if (!fs::is_directory(pred_dir)) throw DataError("prediction directory not found: " + pred_dir.string());
  if (!fs::is_directory(ref_dir)) throw DataError("reference directory not found: " + ref_dir.string());
  const auto ph = recorded_hash(pred_dir, "provenance.json", "corpus_hash");
  const auto rh = recorded_hash(ref_dir, "manifest.json", "config_hash");
  if (ph && rh && *ph != *rh)
    throw ConfigError("predictions were produced from a different corpus (hash mismatch)");

  std::vector<EvalPair> pairs;
  std::vector<std::string> unmatched;
  if (pred_name.empty() != ref_name.empty()) throw UsageError("evaluate: give both file names or neither");
  if (ref_name.empty()) {
    std::set<fs::path> refs, preds;
    for (const auto& e : fs::recursive_directory_iterator(ref_dir))
      if (e.is_regular_file() && is_image_file(e.path())) refs.insert(fs::relative(e.path(), ref_dir));
    for (const auto& e : fs::recursive_directory_iterator(pred_dir))
      if (e.is_regular_file() && is_image_file(e.path())) preds.insert(fs::relative(e.path(), pred_dir));
    for (const fs::path& r : refs) {
      if (preds.count(r))
        pairs.push_back({r.generic_string(), read_image(pred_dir / r), read_image(ref_dir / r)});
      else
        unmatched.push_back("missing prediction: " + r.generic_string());
    }
    for (const fs::path& p : preds)
      if (!refs.count(p)) unmatched.push_back("missing reference: " + p.generic_string());
  } else {
    std::set<std::string> ids;
    for (const auto& e : fs::directory_iterator(ref_dir))
      if (e.is_directory() && fs::exists(e.path() / ref_name)) ids.insert(e.path().filename().string());
    for (const std::string& id : ids) {
      const fs::path p = pred_dir / id / pred_name;
      if (fs::exists(p))
        pairs.push_back({id, read_image(p), read_image(ref_dir / id / ref_name)});
      else
        unmatched.push_back("missing prediction: " + id);
    }
    for (const auto& e : fs::directory_iterator(pred_dir))
      if (e.is_directory() && fs::exists(e.path() / pred_name) && !ids.count(e.path().filename().string()))
        unmatched.push_back("missing reference: " + e.path().filename().string());
  }
  CorpusSummary s = evaluate_pairs(pairs, opts);
  s.unmatched = std::move(unmatched);
  return s;
}

std::string metrics_csv(const CorpusSummary& s) {
  std::ostringstream os;
  char buf[256];
  os << "id,psnr,ssim\n";
  for (const ImageScore& r : s.images) {
    std::snprintf(buf, sizeof buf, "%s,%.10g,%.10g\n", r.id.c_str(), r.psnr, r.ssim);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "mean,%.10g,%.10g\nstd,%.10g,%.10g\n", s.psnr.mean, s.ssim.mean, s.psnr.std,
                s.ssim.std);
  os << buf;
  return os.str();
}

std::string accuracy_csv(const AccuracyCurve& c) {
  std::ostringstream os;
  char buf[64];
  os << "threshold,accuracy\n";
  for (std::size_t t = 0; t < 256; ++t) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g\n", t, c.accuracy[t]);
    os << buf;
  }
  return os.str();
}

}  // namespace ensr
