#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ensr/error.hpp"
#include "ensr/image_io.hpp"
#include "ensr/metrics.hpp"
#include "oracles.hpp"

using namespace ensr;
namespace fs = std::filesystem;

namespace {

Image on_255(Image img) { return Image(img.height(), img.width(), img.values(), 255.0); }

Image random_8bit(std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  Image img(h, w, 255.0);
  for (double& v : img.values()) v = static_cast<double>(rng.below(256));
  return img;
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "ensr_test_metrics" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("psnr closed forms") {
  const Image ref = on_255(oracle::random_image(8, 8, 1, 0, 255));
  CHECK(psnr(ref, ref) == kPsnrIdentical);
  Image zero(4, 4, 255.0), full = Image::filled(4, 4, 255.0, 255.0);
  CHECK(std::abs(psnr(full, zero)) < 1e-9);
  Image off = ref;
  for (double& v : off.values()) v += 25.5;
  CHECK(std::abs(psnr(off, ref) - 20.0) < 1e-9);
  CHECK_THROWS_AS(psnr(Image(4, 4), Image(4, 5)), DimensionError);
}

TEST_CASE("psnr preserves rank order under a shared affine re-ranging") {
  const Image ref = oracle::random_image(16, 16, 2);
  std::vector<Image> cands;
  for (int k = 1; k <= 4; ++k) {
    Image c = ref;
    Rng rng(derive_seed(3, k));
    for (double& v : c.values()) v += 0.02 * k * rng.normal();
    cands.push_back(c);
  }
  auto rerange = [](const Image& x) {
    Image y(x.height(), x.width(), 255.0);
    for (std::size_t i = 0; i < x.size(); ++i) y.values()[i] = 255.0 * x.values()[i] + 10.0;
    return y;
  };
  for (std::size_t i = 1; i < cands.size(); ++i) {
    CHECK(psnr(cands[i - 1], ref) > psnr(cands[i], ref));
    CHECK(psnr(rerange(cands[i - 1]), rerange(ref)) > psnr(rerange(cands[i]), rerange(ref)));
    CHECK(psnr(rerange(cands[i]), rerange(ref)) == doctest::Approx(psnr(cands[i], ref)).epsilon(1e-9));
  }
}

TEST_CASE("ssim identity, symmetry and the per-window oracle") {
  const Image a = oracle::random_image(32, 32, 4), b = oracle::random_image(32, 32, 5);
  CHECK(ssim(a, a) == 1.0);
  CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-12);
  CHECK(std::abs(ssim(a, b) - oracle::ssim(a, b)) < 1e-9);
  Image blur = a;
  for (std::size_t r = 1; r + 1 < 32; ++r)
    for (std::size_t c = 1; c + 1 < 32; ++c) blur(r, c) = (a(r - 1, c) + a(r + 1, c) + 2 * a(r, c)) / 4;
  CHECK(std::abs(ssim(blur, a) - oracle::ssim(blur, a)) < 1e-9);
  const double s = ssim(b, a);
  CHECK(s >= -1.0);
  CHECK(s <= 1.0);
  CHECK_THROWS_AS(ssim(Image(10, 10), Image(10, 10)), DimensionError);
}

TEST_CASE("accuracy curve") {
  const Image ref = random_8bit(20, 20, 6), test = random_8bit(20, 20, 7);
  const AccuracyCurve c = accuracy_curve(test, ref);
  for (int t = 1; t < 256; ++t) CHECK(c.accuracy[t] >= c.accuracy[t - 1]);
  CHECK(c.accuracy[255] == 1.0);
  const AccuracyCurve same = accuracy_curve(ref, ref);
  for (double v : same.accuracy) CHECK(v == 1.0);
  CHECK_THROWS_AS(accuracy_curve(oracle::random_image(4, 4, 1), oracle::random_image(4, 4, 2)), UsageError);
}

TEST_CASE("half the pixels off by ten") {
  Image ref(10, 10, 255.0);
  for (std::size_t i = 0; i < ref.size(); ++i) ref.values()[i] = static_cast<double>(100 + i);
  Image test = ref;
  for (std::size_t i = 0; i < test.size(); i += 2) test.values()[i] += 10;
  const AccuracyCurve c = accuracy_curve(test, ref);
  CHECK(c.accuracy[5] == 0.5);
  CHECK(c.accuracy[9] == 0.5);
  CHECK(c.accuracy[10] == 1.0);
}

TEST_CASE("pooled curve is the pixel-weighted fraction") {
  const Image r1 = random_8bit(8, 8, 10), t1 = random_8bit(8, 8, 11);
  const Image r2 = random_8bit(16, 12, 12), t2 = random_8bit(16, 12, 13);
  AccuracyCounts pooled = accuracy_counts(t1, r1);
  pooled += accuracy_counts(t2, r2);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < r1.size(); ++i) hit += std::abs(t1.values()[i] - r1.values()[i]) <= 5;
  for (std::size_t i = 0; i < r2.size(); ++i) hit += std::abs(t2.values()[i] - r2.values()[i]) <= 5;
  CHECK(pooled.curve().accuracy[5] == doctest::Approx(double(hit) / double(r1.size() + r2.size())).epsilon(1e-15));
}

TEST_CASE("quantize_pair uses the reference range for both") {
  Image ref(1, 3);
  ref.values() = {0.0, 0.5, 1.0};
  Image test(1, 3);
  test.values() = {0.0, 0.25, 2.0};
  const auto [qt, qr] = quantize_pair(test, ref);
  CHECK(qr.values() == std::vector<double>{0, 128, 255});
  CHECK(qt.values() == std::vector<double>{0, 64, 255});
}

TEST_CASE("mean and sample std") {
  const MeanStd m = mean_std({20.0, 30.0});
  CHECK(m.mean == 25.0);
  CHECK(m.std == doctest::Approx(7.0710678118654755).epsilon(1e-12));
  CHECK(mean_std({4.0}).std == 0.0);
}

TEST_CASE("corpus of identical pairs") {
  std::vector<EvalPair> pairs;
  for (int i = 0; i < 3; ++i) {
    const Image img = oracle::random_image(16, 16, 20 + i);
    pairs.push_back({"img" + std::to_string(i), img, img});
  }
  const CorpusSummary s = evaluate_pairs(pairs);
  CHECK(s.ssim.mean == 1.0);
  CHECK(s.ssim.std == 0.0);
  CHECK(s.pooled.accuracy[0] == 1.0);
}

TEST_CASE("evaluating directory trees") {
  const fs::path pred = scratch("pred"), ref = scratch("ref");
  // raw files carry no range, so L = 1
  const Image r0 = oracle::random_image(16, 16, 30), r1 = oracle::random_image(16, 16, 31);
  Image p0 = r0, p1 = r1;
  for (double& v : p0.values()) v += 0.1;                   // 20 dB
  for (double& v : p1.values()) v += std::pow(10.0, -1.5);  // 30 dB
  for (auto [id, r, p] : {std::tuple{"a", &r0, &p0}, {"b", &r1, &p1}}) {
    fs::create_directories(ref / id);
    fs::create_directories(pred / id);
    write_raw(ref / id / "hr.raw", *r);
    write_raw(pred / id / "sr.raw", *p);
  }
  write_raw(pred / "extra.raw", r0);
  const CorpusSummary s = evaluate_corpus(pred, ref, "sr.raw", "hr.raw");
  REQUIRE(s.images.size() == 2);
  CHECK(s.images[0].psnr == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(s.images[1].psnr == doctest::Approx(30.0).epsilon(1e-12));
  CHECK(s.psnr.mean == doctest::Approx(25.0).epsilon(1e-12));
  CHECK(s.psnr.std == doctest::Approx(7.0710678118654755).epsilon(1e-9));

  const std::string csv = metrics_csv(s);
  CHECK(csv.rfind("id,psnr,ssim\n", 0) == 0);
  CHECK(csv.find("\nmean,") != std::string::npos);
  CHECK(accuracy_csv(s.pooled).rfind("threshold,accuracy\n0,", 0) == 0);

  // same names on both sides, one unmatched file
  const fs::path pred2 = scratch("pred2"), ref2 = scratch("ref2");
  write_raw(pred2 / "x.raw", p0);
  write_raw(ref2 / "x.raw", r0);
  write_raw(ref2 / "y.raw", r1);
  const CorpusSummary s2 = evaluate_corpus(pred2, ref2);
  CHECK(s2.images.size() == 1);
  CHECK(s2.unmatched.size() == 1);

  // recorded corpus hashes must agree
  std::ofstream(pred2 / "provenance.json") << R"({"corpus_hash": 1})";
  std::ofstream(ref2 / "manifest.json") << R"({"config_hash": 2})";
  CHECK_THROWS_AS(evaluate_corpus(pred2, ref2), ConfigError);
  CHECK_THROWS_AS(evaluate_corpus(pred / "missing", ref), DataError);
}
