// Acceptance harness: one PASS/FAIL line per criterion. Usage:
//   acceptance <work_dir>
// The work directory is wiped first; the desk-scale runs live under it.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>

#include "ensr/config.hpp"
#include "ensr/corpus.hpp"
#include "ensr/dictionary_sr.hpp"
#include "ensr/ensemble.hpp"
#include "ensr/gan.hpp"
#include "ensr/image_io.hpp"
#include "ensr/interpolation.hpp"
#include "ensr/kspace.hpp"
#include "ensr/metrics.hpp"
#include "ensr/nn/ops.hpp"
#include "ensr/phantom.hpp"
#include "ensr/pipeline.hpp"
#include "ensr/sparse_coding.hpp"
#include "oracles.hpp"

using namespace ensr;
using namespace ensr::nn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Tensor rnd(Shape s, std::uint64_t seed, double lo = -1, double hi = 1) {
  Tensor t(std::move(s));
  Rng rng(seed);
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

Var probe(const Var& y) { return sum_all(mul(y, constant(rnd(y.shape(), 99)))); }

Image cosine(double fy, double fx, std::size_t h, std::size_t w) {
  Image img(h, w);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c)
      img(r, c) = std::cos(2 * std::numbers::pi * (fy * double(r) / double(h) + fx * double(c) / double(w)));
  return img;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

// First differing relative path between two trees, or "" when identical.
std::string first_difference(const fs::path& a, const fs::path& b) {
  const auto ta = tree(a), tb = tree(b);
  for (const auto& [k, v] : ta) {
    const auto it = tb.find(k);
    if (it == tb.end() || it->second != v) return k;
  }
  for (const auto& [k, v] : tb)
    if (!ta.count(k)) return k;
  return "";
}

// ---------------------------------------------------------------------------

Outcome kspace_exactness() {
  Rng rng(2024);
  double zip = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t h = 2 * (1 + rng.below(16)), w = 2 * (1 + rng.below(16));
    const Image lr = oracle::random_image(h, w, derive_seed(7, t), -1, 1);
    zip = std::max(zip, max_abs_diff(downsample_kspace(zip_upscale(lr, 2 * h, 2 * w)), lr));
  }
  double band = 0;
  for (auto [ky, kx] : {std::pair{0, 3}, {5, 0}, {2, -7}, {7, 7}, {0, 9}, {12, 0}, {16, 16}, {-10, 3}, {8, 0}}) {
    const Image x = cosine(ky, kx, 32, 32);
    band = std::max(band, max_abs_diff(downsample_kspace(x), oracle::downsample_dft(x)));
  }
  return {zip < 1e-10 && band < 1e-10, "zip right-inverse max err " + fmt("%.2e", zip) + ", band cosines vs DFT " +
                                           fmt("%.2e", band)};
}

Outcome classical_oracles() {
  double bic = 0;
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{8, 8}, {5, 11}, {16, 4}})
    bic = std::max(bic, max_abs_diff(bicubic_upscale(oracle::random_image(h, w, h + w), 2),
                                     oracle::bicubic2x(oracle::random_image(h, w, h + w))));

  PhantomConfig pc;
  pc.height = pc.width = 48;
  std::vector<Image> hr{generate_phantom(pc, 1), generate_phantom(pc, 2)};
  DictionaryTrainingOptions o;
  o.n_atoms = 24;
  o.iterations = 3;
  o.neighborhood_size = 12;
  o.seed = 5;
  const TrainedDictionary td = train_dictionary(hr, o);
  double constant_err = 0;
  bool dims = true;
  const Image flat = Image::filled(16, 12, 0.42);
  for (SRMethod m : kAllMethods) {
    const Image up = process_lr(flat, m, td);
    dims &= up.height() == 32 && up.width() == 24;
    if (dims) constant_err = std::max(constant_err, max_abs_diff(up, Image::filled(32, 24, 0.42)));
  }

  // single-atom SC: residual = h <a, f>
  Dictionary d;
  d.features.patch_size = 2;
  Eigen::VectorXd a(5);
  a << 0.1, -0.4, 0.3, 0.8, 0.2;
  d.atoms = a.normalized();
  d.hr_atoms = Eigen::VectorXd::LinSpaced(4, -1.0, 2.0);
  Eigen::VectorXd f(5);
  f << 0.5, 1.0, -0.2, 0.3, 0.9;
  const double sc = (sc_patch_residual(d, f, 1) - d.hr_atoms.col(0) * d.atoms.col(0).dot(f)).norm();

  // A+ anchors: largest |correlation|, first on ties
  Eigen::MatrixXd atoms(6, 8);
  Rng rng(1);
  for (Eigen::Index j = 0; j < 8; ++j) {
    for (Eigen::Index i = 0; i < 6; ++i) atoms(i, j) = rng.normal();
    atoms.col(j).normalize();
  }
  atoms.col(5) = -atoms.col(2);
  Dictionary anchors;
  anchors.atoms = atoms;
  int anchor_miss = nearest_anchor(anchors, atoms.col(5)) == 2 ? 0 : 1;
  for (int t = 0; t < 200; ++t) {
    Eigen::VectorXd v(6);
    for (Eigen::Index i = 0; i < 6; ++i) v(i) = rng.normal();
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < 8; ++j)
      if (std::abs(atoms.col(j).dot(v)) > std::abs(atoms.col(best).dot(v))) best = j;
    anchor_miss += nearest_anchor(anchors, v) != best;
  }
  const bool ok = bic < 1e-12 && dims && constant_err < 1e-9 && sc < 1e-12 && anchor_miss == 0;
  return {ok, "bicubic vs brute force " + fmt("%.2e", bic) + ", constants " + fmt("%.2e", constant_err) +
                  (dims ? ", 2x dims" : ", WRONG dims") + ", SC single atom " + fmt("%.2e", sc) +
                  ", anchor mismatches " + std::to_string(anchor_miss)};
}

Outcome autodiff_integrity() {
  double layers = 0;
  const auto chk = [&](const std::function<Var()>& f, const std::vector<Var>& wrt, std::size_t coords = 0) {
    layers = std::max(layers, oracle::gradcheck(f, wrt, coords));
  };
  const Var a = leaf(rnd({2, 3, 4, 5}, 1)), b = leaf(rnd({2, 3, 4, 5}, 2));
  const Var p = leaf(rnd({2, 3, 4, 5}, 3, 0.5, 2));
  chk([&] { return probe(add(a, b)); }, {a, b});
  chk([&] { return probe(sub(a, b)); }, {a, b});
  chk([&] { return probe(mul(a, b)); }, {a, b});
  chk([&] { return probe(scale(a, -2.5)); }, {a});
  chk([&] { return probe(pow_scalar(p, -0.5)); }, {p});
  chk([&] { return probe(relu(a)); }, {a});
  chk([&] { return probe(leaky_relu(a, 0.2)); }, {a});
  chk([&] { return probe(abs(a)); }, {a});
  chk([&] { return probe(global_avg_pool(a)); }, {a});
  chk([&] { return probe(concat_channels(a, b)); }, {a, b});
  chk([&] { return probe(diff_x(a)); }, {a});
  chk([&] { return probe(diff_y(a)); }, {a});
  const Var x = leaf(rnd({2, 3, 7, 6}, 4)), w = leaf(rnd({4, 3, 3, 3}, 5)), bias = leaf(rnd({4}, 6));
  for (std::size_t stride : {1u, 2u}) chk([&] { return probe(add_channel_bias(conv2d(x, w, {stride, 1}), bias)); }, {x, w, bias});
  const Var g = leaf(rnd({3}, 7, 0.5, 1.5)), be = leaf(rnd({3}, 8));
  chk([&] { return probe(layer_norm(a, g, be)); }, {a, g, be});
  chk([&] { return mean_squared_error(a, b); }, {a, b});
  chk([&] { return mean_absolute_error(a, b); }, {a, b});

  GeneratorSpec gs;
  gs.width = 1.0 / 16;
  const ParamStore gp = init_generator(gs, 3);
  const Var gx = leaf(rnd({2, 1, 8, 8}, 31, 0, 1));
  std::vector<Var> gw = gp.params();
  gw.push_back(gx);
  chk([&] { return probe(generator_forward(gs, gp, gx)); }, gw, 12);
  DiscriminatorSpec ds;
  ds.width = 1.0 / 32;
  const ParamStore dp = init_discriminator(ds, 4);
  const Var dx = leaf(rnd({2, 1, 16, 16}, 32, 0, 1));
  std::vector<Var> dw = dp.params();
  dw.push_back(dx);
  chk([&] { return probe(discriminator_forward(ds, dp, dx)); }, dw, 12);

  const ParamStore frozen = init_discriminator(ds, 13).frozen();
  const Tensor in = rnd({2, 1, 8, 8}, 14, 0, 1), target = rnd({2, 1, 8, 8}, 15, 0, 1);
  const RandomConvExtractor phi(7);
  const double composite = oracle::gradcheck(
      [&] {
        const Var fake = generator_forward(gs, gp, constant(in));
        return generator_objective(fake, constant(target), discriminator_forward(ds, frozen, fake), phi, LossWeights{})
            .total;
      },
      gp.params(), 12);
  return {layers < 1e-6 && composite < 1e-5,
          "worst layer rel err " + fmt("%.2e", layers) + ", composite objective " + fmt("%.2e", composite)};
}

Outcome gradient_penalty_analytics() {
  const Tensor real = rnd({3, 1, 4, 4}, 1), fake = rnd({3, 1, 4, 4}, 2);
  std::string detail;
  bool ok = true;
  for (auto [norm, want] : {std::pair{1.0, 0.0}, {3.0, 4.0}}) {
    Tensor w = rnd({1, 1, 4, 4}, 3);
    double n2 = 0;
    for (double v : w.data) n2 += v * v;
    Tensor wb(real.shape);
    for (std::size_t i = 0; i < wb.size(); ++i) wb.data[i] = w.data[i % 16] * norm / std::sqrt(n2);
    const double got =
        gradient_penalty([&](const Var& v) { return sum_sample(mul(v, constant(wb))); }, real, fake, 4).value()[0];
    ok &= std::abs(got - want) < 1e-9;
    detail += "|w|=" + fmt("%g", norm) + " -> " + fmt("%.12f", got) + ", ";
  }
  const double qa = 0.7;
  const Tensor x = rnd({4, 2, 3, 3}, 5);
  double want = 0;
  for (std::size_t n = 0; n < 4; ++n) {
    double s = 0;
    for (std::size_t j = 0; j < 18; ++j) s += x.data[n * 18 + j] * x.data[n * 18 + j];
    want += std::pow(qa * std::sqrt(s) - 1, 2) / 4;
  }
  const double quad =
      std::abs(gradient_penalty([&](const Var& v) { return scale(sum_sample(mul(v, v)), qa / 2); }, x, x, 9).value()[0] -
               want);
  ok &= quad < 1e-7;
  return {ok, detail + "quadratic closed form err " + fmt("%.2e", quad)};
}

Outcome metric_fidelity() {
  const Image ref(4, 4, 255.0);
  const Image full = Image::filled(4, 4, 255.0, 255.0);
  const double p0 = psnr(full, ref);
  Image r = oracle::random_image(8, 8, 1, 0, 255);
  r.set_intensity_max(255.0);
  Image off = r;
  for (double& v : off.values()) v += 25.5;
  const double p20 = psnr(off, r);
  const Image a = oracle::random_image(32, 32, 4), b = oracle::random_image(32, 32, 5);
  const double self = ssim(a, a), oracle_err = std::abs(ssim(a, b) - oracle::ssim(a, b));
  bool monotone = true;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto [qt, qr] = quantize_pair(oracle::random_image(16, 16, 100 + s), oracle::random_image(16, 16, 200 + s));
    const AccuracyCurve c = accuracy_curve(qt, qr);
    for (int t = 1; t < 256; ++t) monotone &= c.accuracy[t] >= c.accuracy[t - 1];
    monotone &= c.accuracy[255] == 1.0;
  }
  Image half(10, 10, 255.0);
  for (std::size_t i = 0; i < half.size(); ++i) half.values()[i] = static_cast<double>(100 + i);
  Image shifted = half;
  for (std::size_t i = 0; i < shifted.size(); i += 2) shifted.values()[i] += 10;
  const AccuracyCurve hc = accuracy_curve(shifted, half);
  const bool ok = std::abs(p0) < 1e-9 && std::abs(p20 - 20) < 1e-9 && self == 1.0 && oracle_err < 1e-9 && monotone &&
                  hc.accuracy[5] == 0.5 && hc.accuracy[10] == 1.0;
  return {ok, "PSNR " + fmt("%.12f", p0) + " / " + fmt("%.12f", p20) + " dB, SSIM(I,I) " + fmt("%.15g", self) +
                  ", SSIM oracle err " + fmt("%.2e", oracle_err) + (monotone ? ", curves monotone" : ", NOT monotone") +
                  ", acc(5) " + fmt("%g", hc.accuracy[5]) + " acc(10) " + fmt("%g", hc.accuracy[10])};
}

Outcome patch_protocol() {
  const Image img = oracle::random_image(320, 320, 9);
  const PatchGrid g = patchify(img, 80, 40);
  const bool exact = unpatchify(g) == img;
  return {g.patches.size() == 49 && exact,
          std::to_string(g.patches.size()) + " patches" + (exact ? ", roundtrip exact" : ", roundtrip NOT exact")};
}

// ---------------------------------------------------------------------------

struct DeskRun {
  RunConfig cfg;
  RunPaths paths;
  bool ok = false;
  std::string error;
};

// Rows keyed by their first `key_cols` cells joined with ','.
std::map<std::string, std::vector<std::string>> read_csv_rows(const fs::path& p, std::size_t key_cols = 1) {
  std::map<std::string, std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (cells.size() <= key_cols) continue;
    std::string key = cells[0];
    for (std::size_t k = 1; k < key_cols; ++k) key += "," + cells[k];
    rows[key] = cells;
  }
  return rows;
}

double mean_test_psnr(const CorpusManifest& corpus, const RunPaths& paths, const IntegratorModel* model) {
  std::vector<double> v;
  for (const CorpusEntry& e : corpus.split("test")) {
    const PredictionStack stack = load_stack(paths, "test", e.id, model ? model->methods : std::vector<SRMethod>(
                                                                                             kAllMethods.begin(), kAllMethods.end()));
    const Image hr = load_role(corpus, e, "hr");
    v.push_back(psnr(model ? integrate(*model, stack) : average_ensemble(stack), hr));
  }
  return mean_std(v).mean;
}

// Drop of L_mse over 200 single-batch generator steps. The per-step curve is
// noisy, so the first step is compared with the mean of the last ten.
double overfit_drop(const CorpusManifest& corpus, const RunConfig& cfg, SRMethod m, bool residual) {
  GanConfig g = gan_config(cfg, m);
  g.generator.residual = residual;
  g.single_batch = true;
  g.batch = 2;
  g.max_g_steps = 200;
  const GanResult r = train_gan(gan_training_data(corpus, m, "train", cfg.patch_size, cfg.patch_stride), g);
  double tail = 0;
  for (std::size_t i = r.step_mse.size() - 10; i < r.step_mse.size(); ++i) tail += r.step_mse[i] / 10;
  return 1 - tail / r.step_mse.front();
}

// Gated on the plain generator trained from scratch. The residual generator
// starts at its classical input, so its drop is reported for information only.
Outcome overfit(const DeskRun& run) {
  const CorpusManifest corpus = load_manifest(run.paths.corpus());
  std::string plain, residual;
  bool ok = true;
  for (SRMethod m : kAllMethods) {
    const double drop = overfit_drop(corpus, run.cfg, m, false);
    ok &= drop >= 0.5;
    plain += std::string(method_name(m)) + " " + fmt("%.0f%%", 100 * drop) + " ";
    residual += std::string(method_name(m)) + " " + fmt("%.0f%%", 100 * overfit_drop(corpus, run.cfg, m, true)) + " ";
  }
  return {ok, "L_mse drop over 200 single-batch steps: " + plain + "(residual generator, not gated: " + residual + ")"};
}

Outcome ensemble_vs_average(const DeskRun& run) {
  const CorpusManifest corpus = load_manifest(run.paths.corpus());
  const std::vector<SRMethod> five(kAllMethods.begin(), kAllMethods.end());
  const double avg = mean_test_psnr(corpus, run.paths, nullptr);
  const auto summary = read_csv_rows(run.paths.report() / "summary.csv");
  std::vector<double> cnn{std::stod(summary.at("cnn5")[1])};
  const PairedPatches data =
      integrator_training_data(corpus, run.paths, five, "train", run.cfg.patch_size, run.cfg.patch_stride);
  for (std::uint64_t extra : {2u, 3u}) {
    const IntegratorConfig ic = integrator_config(run.cfg, five, derive_seed(run.cfg.seed + extra, 35));
    const IntegratorResult r = train_integrator(data, ic);
    cnn.push_back(mean_test_psnr(corpus, run.paths, &r.model));
  }
  int wins = 0;
  std::string detail = "avg5 " + fmt("%.2f", avg) + " dB; cnn5 per seed";
  for (double c : cnn) {
    wins += c >= avg;
    detail += " " + fmt("%.2f", c);
  }
  return {2 * wins > static_cast<int>(cnn.size()), detail + " (" + std::to_string(wins) + "/3 seeds cnn5 >= avg5)"};
}

Outcome ablation_grid(const DeskRun& run) {
  const auto rows = read_csv_rows(run.paths.report() / "ablation.csv", 2);
  std::string detail;
  bool ok = true;
  for (const char* key : {"3,avg", "3,cnn", "5,avg", "5,cnn"}) {
    const auto it = rows.find(key);
    if (it == rows.end()) {
      ok = false;
      detail += std::string(key) + " missing; ";
    } else {
      detail += std::string(key) + " " + it->second[2] + " dB; ";
    }
  }
  const IntegratorModel three = IntegratorModel::load(run.paths.ensemble("cnn3") / "model");
  const std::vector<SRMethod> want{SRMethod::Zip, SRMethod::Bicubic, SRMethod::Nedi};
  ok &= three.methods == want;
  // avg3 really is the mean of the three fixed members
  const CorpusManifest corpus = load_manifest(run.paths.corpus());
  const CorpusEntry e = corpus.split("test")[0];
  const double avg_err = max_abs_diff(read_raw(run.paths.prediction("test", e.id, "avg3")),
                                      average_ensemble(load_stack(run.paths, "test", e.id, want)));
  ok &= avg_err < 1e-12;
  return {ok, detail + "3-input set " + (three.methods == want ? "{zip,bi,nedi}" : "WRONG") +
                  fmt(", avg3 vs member mean %.2e", avg_err)};
}

Outcome determinism(const fs::path& work) {
  // The desk preset shrunk further so the whole chain runs twice quickly.
  RunConfig cfg = desk_config();
  cfg.corpus.n_train = 4;
  cfg.corpus.n_test = 2;
  cfg.corpus.dict_images = 2;
  cfg.gan_epochs = 1;
  cfg.ens_epochs = 2;
  cfg.gan_jobs = 2;
  PipelineOptions opts;
  opts.ablation = true;
  run_pipeline(cfg, work / "det_a", opts);
  run_pipeline(cfg, work / "det_b", opts);
  const auto files = tree(work / "det_a").size();
  const std::string diff = first_difference(work / "det_a", work / "det_b");
  return {diff.empty(), diff.empty() ? std::to_string(files) + " artifacts byte-identical across two full runs "
                                                               "(corpus, checkpoints, predictions, CSVs)"
                                     : "first difference: " + diff};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: acceptance <work_dir>\n");
    return 2;
  }
  const fs::path work = fs::absolute(argv[1]);
  fs::remove_all(work);
  fs::create_directories(work);
  int failures = 0;
  const auto report = [&](int n, const char* name, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !o.pass;
    std::printf("criterion %d %s  %s: %s [%.1f s]\n", n, o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
    std::fflush(stdout);
  };

  report(1, "k-space exactness", kspace_exactness);
  report(2, "classical-SR oracles", classical_oracles);
  report(3, "autodiff integrity", autodiff_integrity);
  report(4, "gradient-penalty analytics", gradient_penalty_analytics);
  report(5, "metric fidelity", metric_fidelity);
  report(6, "patch protocol", patch_protocol);

  DeskRun run{desk_config(), RunPaths{work / "desk"}};
  {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string cmd = std::string(ENSR_CLI) + " --preset desk run-all --ablation --out " +
                            run.paths.root.string() + " > " + (work / "desk.log").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    run.ok = status == 0;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("desk run-all --ablation: %s [%.1f s]\n", run.ok ? "ok" : "FAILED (see desk.log)", secs);
    std::fflush(stdout);
  }
  const auto needs_run = [&](Outcome (*fn)(const DeskRun&)) {
    return [&run, fn] { return run.ok ? fn(run) : Outcome{false, "desk run failed"}; };
  };
  report(7, "toy training (a) single-batch overfit", needs_run(overfit));
  report(7, "toy training (b) cnn5 vs avg5", needs_run(ensemble_vs_average));
  report(8, "determinism", [&] { return determinism(work); });
  report(9, "ablation harness", needs_run(ablation_grid));
  std::printf("%s\n", failures == 0 ? "ALL CRITERIA PASS" : (std::to_string(failures) + " FAILED").c_str());
  return failures == 0 ? 0 : 1;
}
