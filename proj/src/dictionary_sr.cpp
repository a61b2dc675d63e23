#include "ensr/dictionary_sr.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "ensr/error.hpp"
#include "ensr/image_io.hpp"
#include "ensr/interpolation.hpp"
#include "ensr/kspace.hpp"
#include "ensr/random.hpp"
#include "ensr/sparse_coding.hpp"

namespace ensr {

std::string FeatureConfig::describe() const {
  std::ostringstream os;
  os << "grad1+grad2 on bicubic, patch " << patch_size << ", stride " << stride << ", pca energy "
     << pca_energy;
  return os.str();
}

namespace {

// Gradient responses on the bicubic grid: d/dx, d/dy, d2/dx2, d2/dy2.
std::array<Image, 4> gradient_maps(const Image& mid) {
  std::array<Image, 4> g;
  for (auto& m : g) m = Image(mid.height(), mid.width(), mid.intensity_max());
  for (long r = 0; r < static_cast<long>(mid.height()); ++r) {
    for (long c = 0; c < static_cast<long>(mid.width()); ++c) {
      const auto ur = static_cast<std::size_t>(r);
      const auto uc = static_cast<std::size_t>(c);
      const double center = mid(ur, uc);
      g[0](ur, uc) = mid.clamped(r, c + 1) - mid.clamped(r, c - 1);
      g[1](ur, uc) = mid.clamped(r + 1, c) - mid.clamped(r - 1, c);
      g[2](ur, uc) = mid.clamped(r, c + 2) - 2.0 * center + mid.clamped(r, c - 2);
      g[3](ur, uc) = mid.clamped(r + 2, c) - 2.0 * center + mid.clamped(r - 2, c);
    }
  }
  return g;
}

std::vector<PatchOffset> patch_positions(std::size_t h, std::size_t w, const FeatureConfig& cfg) {
  const auto p = static_cast<std::size_t>(cfg.patch_size);
  const auto s = static_cast<std::size_t>(cfg.stride);
  if (h < p || w < p || (h - p) % s != 0 || (w - p) % s != 0) {
    throw DimensionError("feature grid: image " + std::to_string(h) + "x" + std::to_string(w) +
                         " does not tile with patch " + std::to_string(p) + " / stride " +
                         std::to_string(s));
  }
  std::vector<PatchOffset> out;
  for (std::size_t r = 0; r + p <= h; r += s)
    for (std::size_t c = 0; c + p <= w; c += s) out.push_back({r, c});
  return out;
}

void require_trained(const Dictionary& dict, const char* what) {
  if (!dict.trained() || dict.projection.cols() != dict.features.raw_dim() ||
      dict.projection.rows() != dict.atoms.rows() || dict.hr_atoms.rows() != dict.features.hr_dim() ||
      dict.hr_atoms.cols() != dict.atoms.cols()) {
    throw ConfigError(std::string(what) + ": dictionary is untrained or its shapes do not match " +
                      "the feature configuration");
  }
}

// Adds an hr_dim residual vector into the overlap accumulators.
void accumulate(Image& sum, std::vector<double>& weight, const PatchOffset& o, int p,
                const Eigen::VectorXd& residual) {
  for (int r = 0; r < p; ++r) {
    for (int c = 0; c < p; ++c) {
      const std::size_t rr = o.row + static_cast<std::size_t>(r);
      const std::size_t cc = o.col + static_cast<std::size_t>(c);
      sum(rr, cc) += residual(r * p + c);
      weight[rr * sum.width() + cc] += 1.0;
    }
  }
}

Image finish(const Image& baseline, const Image& sum, const std::vector<double>& weight) {
  Image out = baseline;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (weight[i] > 0.0) out.values()[i] += sum.values()[i] / weight[i];
  return out;
}

std::vector<double> to_row_major(const Eigen::MatrixXd& m) {
  std::vector<double> v(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) v[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
  return v;
}

Eigen::MatrixXd from_row_major(const RawMatrix& raw) {
  Eigen::MatrixXd m(raw.rows, raw.cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = raw.values[static_cast<std::size_t>(r * m.cols() + c)];
  return m;
}

}  // namespace

FeatureField extract_features(const Image& lr, const FeatureConfig& cfg) {
  FeatureField field;
  field.baseline = bicubic_upscale(lr);
  const auto maps = gradient_maps(field.baseline);
  field.offsets = patch_positions(field.baseline.height(), field.baseline.width(), cfg);
  const int p = cfg.patch_size;
  field.raw.resize(cfg.raw_dim(), static_cast<Eigen::Index>(field.offsets.size()));
  for (std::size_t i = 0; i < field.offsets.size(); ++i) {
    const PatchOffset o = field.offsets[i];
    Eigen::Index k = 0;
    for (const Image& m : maps)
      for (int r = 0; r < p; ++r)
        for (int c = 0; c < p; ++c)
          field.raw(k++, static_cast<Eigen::Index>(i)) =
              m(o.row + static_cast<std::size_t>(r), o.col + static_cast<std::size_t>(c));
  }
  return field;
}

TrainingPairs collect_training_pairs(const std::vector<Image>& hr_images, const FeatureConfig& cfg) {
  std::vector<Eigen::VectorXd> feats;
  std::vector<Eigen::VectorXd> targets;
  const int p = cfg.patch_size;
  for (const Image& hr : hr_images) {
    const Image lr = downsample_kspace(hr);
    const FeatureField field = extract_features(lr, cfg);
    for (std::size_t i = 0; i < field.offsets.size(); ++i) {
      const Eigen::VectorXd f = field.raw.col(static_cast<Eigen::Index>(i));
      if (f.norm() < cfg.min_feature_norm) continue;
      Eigen::VectorXd t(cfg.hr_dim());
      const PatchOffset o = field.offsets[i];
      for (int r = 0; r < p; ++r) {
        for (int c = 0; c < p; ++c) {
          const std::size_t rr = o.row + static_cast<std::size_t>(r);
          const std::size_t cc = o.col + static_cast<std::size_t>(c);
          t(r * p + c) = hr(rr, cc) - field.baseline(rr, cc);
        }
      }
      feats.push_back(f);
      targets.push_back(std::move(t));
    }
  }
  TrainingPairs pairs;
  pairs.features.resize(cfg.raw_dim(), static_cast<Eigen::Index>(feats.size()));
  pairs.targets.resize(cfg.hr_dim(), static_cast<Eigen::Index>(feats.size()));
  for (std::size_t i = 0; i < feats.size(); ++i) {
    pairs.features.col(static_cast<Eigen::Index>(i)) = feats[i];
    pairs.targets.col(static_cast<Eigen::Index>(i)) = targets[i];
  }
  return pairs;
}

TrainedDictionary train_dictionary(const std::vector<Image>& hr_images,
                                   const DictionaryTrainingOptions& opts) {
  const TrainingPairs pairs = collect_training_pairs(hr_images, opts.features);
  const Eigen::Index n = pairs.features.cols();
  if (n < opts.n_atoms) {
    throw DataError("train_dictionary: need at least " + std::to_string(opts.n_atoms) +
                    " informative training patches, found " + std::to_string(n));
  }

  TrainedDictionary td;
  Dictionary& dict = td.dict;
  dict.features = opts.features;
  dict.seed = opts.seed;
  dict.sparsity = opts.sparsity;
  dict.training_hash = fnv1a(pairs.features.data(), static_cast<std::size_t>(pairs.features.size()) * sizeof(double));
  dict.training_hash = fnv1a(pairs.targets.data(), static_cast<std::size_t>(pairs.targets.size()) * sizeof(double),
                             dict.training_hash);

  // Uncentered PCA keeps a zero feature at zero.
  const Eigen::MatrixXd scatter = pairs.features * pairs.features.transpose();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scatter);
  const Eigen::VectorXd evals = eig.eigenvalues().reverse().cwiseMax(0.0);
  const double total = evals.sum();
  Eigen::Index keep = 0;
  double acc = 0.0;
  while (keep < evals.size() && (keep == 0 || acc < opts.features.pca_energy * total)) acc += evals(keep++);
  dict.projection.resize(keep, opts.features.raw_dim());
  for (Eigen::Index k = 0; k < keep; ++k) {
    Eigen::VectorXd v = eig.eigenvectors().col(evals.size() - 1 - k);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    dict.projection.row(k) = v.transpose();
  }
  const Eigen::MatrixXd projected = dict.projection * pairs.features;

  KsvdOptions kopts;
  kopts.n_atoms = opts.n_atoms;
  kopts.sparsity = opts.sparsity;
  kopts.iterations = opts.iterations;
  kopts.seed = opts.seed;
  const KsvdResult k = ksvd(projected, kopts);
  dict.atoms = k.dict;

  // Paired HR atoms: least-squares map from sparse codes to HR residuals.
  const Eigen::Index na = opts.n_atoms;
  Eigen::MatrixXd cct = Eigen::MatrixXd::Zero(na, na);
  Eigen::MatrixXd yct = Eigen::MatrixXd::Zero(opts.features.hr_dim(), na);
  for (Eigen::Index i = 0; i < n; ++i) {
    const SparseCode& c = k.codes[static_cast<std::size_t>(i)];
    for (std::size_t a = 0; a < c.support.size(); ++a) {
      const double ca = c.coeffs(static_cast<Eigen::Index>(a));
      yct.col(c.support[a]) += pairs.targets.col(i) * ca;
      for (std::size_t b = 0; b < c.support.size(); ++b)
        cct(c.support[a], c.support[b]) += ca * c.coeffs(static_cast<Eigen::Index>(b));
    }
  }
  cct.diagonal().array() += 1e-8;
  dict.hr_atoms = cct.ldlt().solve(yct.transpose()).transpose();

  // A+ regressors over each anchor's most correlated training samples.
  AnchoredRegressors& reg = td.regressors;
  reg.ridge = opts.ridge;
  reg.neighborhood_size = static_cast<int>(std::min<Eigen::Index>(opts.neighborhood_size, n));
  Eigen::MatrixXd znorm = projected;
  Eigen::MatrixXd ynorm = pairs.targets;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double len = projected.col(i).norm();
    if (len > 0.0) {
      znorm.col(i) /= len;
      ynorm.col(i) /= len;
    }
  }
  const Eigen::Index d = projected.rows();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  reg.regressors.resize(static_cast<std::size_t>(na));
  for (Eigen::Index a = 0; a < na; ++a) {
    const Eigen::VectorXd corr = (dict.atoms.col(a).transpose() * znorm).transpose().cwiseAbs();
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const auto m = static_cast<std::size_t>(reg.neighborhood_size);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m), order.end(),
                      [&](Eigen::Index x, Eigen::Index y) {
                        return corr(x) > corr(y) || (corr(x) == corr(y) && x < y);
                      });
    Eigen::MatrixXd zn(d, static_cast<Eigen::Index>(m));
    Eigen::MatrixXd yn(opts.features.hr_dim(), static_cast<Eigen::Index>(m));
    for (std::size_t j = 0; j < m; ++j) {
      zn.col(static_cast<Eigen::Index>(j)) = znorm.col(order[j]);
      yn.col(static_cast<Eigen::Index>(j)) = ynorm.col(order[j]);
    }
    Eigen::MatrixXd gram = zn * zn.transpose();
    gram.diagonal().array() += opts.ridge;
    // R = Yn Zn^T (Zn Zn^T + ridge I)^-1
    reg.regressors[static_cast<std::size_t>(a)] =
        gram.ldlt().solve(zn * yn.transpose()).transpose();
  }
  return td;
}

Eigen::VectorXd sc_patch_residual(const Dictionary& dict, const Eigen::VectorXd& projected,
                                  int sparsity) {
  const SparseCode code = omp(dict.atoms, projected, sparsity);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dict.hr_atoms.rows());
  for (std::size_t j = 0; j < code.support.size(); ++j)
    out += dict.hr_atoms.col(code.support[j]) * code.coeffs(static_cast<Eigen::Index>(j));
  return out;
}

Eigen::Index nearest_anchor(const Dictionary& dict, const Eigen::VectorXd& projected) {
  if (projected.norm() == 0.0) return -1;
  const Eigen::VectorXd corr = dict.atoms.transpose() * projected;
  Eigen::Index best = 0;
  double best_abs = std::abs(corr(0));
  for (Eigen::Index k = 1; k < corr.size(); ++k) {
    if (std::abs(corr(k)) > best_abs) {
      best_abs = std::abs(corr(k));
      best = k;
    }
  }
  return best;
}

Image sc_upscale(const Image& lr, const Dictionary& dict, int sparsity) {
  require_trained(dict, "sc_upscale");
  const FeatureField field = extract_features(lr, dict.features);
  Image sum(field.baseline.height(), field.baseline.width(), lr.intensity_max());
  std::vector<double> weight(sum.size(), 0.0);
  const Eigen::MatrixXd projected = dict.projection * field.raw;
  for (std::size_t i = 0; i < field.offsets.size(); ++i) {
    const Eigen::VectorXd z = projected.col(static_cast<Eigen::Index>(i));
    const Eigen::VectorXd res = z.norm() > 0.0 ? sc_patch_residual(dict, z, sparsity)
                                               : Eigen::VectorXd::Zero(dict.features.hr_dim());
    accumulate(sum, weight, field.offsets[i], dict.features.patch_size, res);
  }
  return finish(field.baseline, sum, weight);
}

Image aplus_upscale(const Image& lr, const Dictionary& dict, const AnchoredRegressors& reg) {
  require_trained(dict, "aplus_upscale");
  if (reg.regressors.size() != static_cast<std::size_t>(dict.n_atoms()))
    throw ConfigError("aplus_upscale: regressor count does not match the dictionary");
  const FeatureField field = extract_features(lr, dict.features);
  Image sum(field.baseline.height(), field.baseline.width(), lr.intensity_max());
  std::vector<double> weight(sum.size(), 0.0);
  const Eigen::MatrixXd projected = dict.projection * field.raw;
  for (std::size_t i = 0; i < field.offsets.size(); ++i) {
    const Eigen::VectorXd z = projected.col(static_cast<Eigen::Index>(i));
    const Eigen::Index anchor = nearest_anchor(dict, z);
    const Eigen::VectorXd res = anchor < 0 ? Eigen::VectorXd::Zero(dict.features.hr_dim())
                                           : Eigen::VectorXd(reg.regressors[static_cast<std::size_t>(anchor)] * z);
    accumulate(sum, weight, field.offsets[i], dict.features.patch_size, res);
  }
  return finish(field.baseline, sum, weight);
}

void save_dictionary(const std::filesystem::path& json_path, const TrainedDictionary& td) {
  const Dictionary& d = td.dict;
  require_trained(d, "save_dictionary");
  auto sibling = [&](const char* suffix) {
    auto p = json_path;
    p.replace_extension(std::string(suffix) + ".raw");
    return p;
  };
  write_raw_matrix(sibling(".projection"), static_cast<std::uint32_t>(d.projection.rows()),
                   static_cast<std::uint32_t>(d.projection.cols()), to_row_major(d.projection));
  write_raw_matrix(sibling(".atoms"), static_cast<std::uint32_t>(d.atoms.rows()),
                   static_cast<std::uint32_t>(d.atoms.cols()), to_row_major(d.atoms));
  write_raw_matrix(sibling(".hr_atoms"), static_cast<std::uint32_t>(d.hr_atoms.rows()),
                   static_cast<std::uint32_t>(d.hr_atoms.cols()), to_row_major(d.hr_atoms));
  const auto hr_dim = static_cast<Eigen::Index>(d.features.hr_dim());
  Eigen::MatrixXd stacked(hr_dim * d.n_atoms(), d.atom_dim());
  for (int a = 0; a < d.n_atoms(); ++a)
    stacked.middleRows(a * hr_dim, hr_dim) = td.regressors.regressors[static_cast<std::size_t>(a)];
  write_raw_matrix(sibling(".regressors"), static_cast<std::uint32_t>(stacked.rows()),
                   static_cast<std::uint32_t>(stacked.cols()), to_row_major(stacked));

  nlohmann::ordered_json j;
  j["schema"] = 1;
  j["n_atoms"] = d.n_atoms();
  j["atom_dim"] = d.atom_dim();
  j["sparsity"] = d.sparsity;
  j["seed"] = d.seed;
  j["training_hash"] = d.training_hash;
  j["features"] = {{"kind", "grad1+grad2"},
                   {"patch_size", d.features.patch_size},
                   {"stride", d.features.stride},
                   {"pca_energy", d.features.pca_energy},
                   {"min_feature_norm", d.features.min_feature_norm}};
  j["aplus"] = {{"neighborhood_size", td.regressors.neighborhood_size},
                {"ridge", td.regressors.ridge}};
  write_text_file(json_path, j.dump(2) + "\n");
}

TrainedDictionary load_dictionary(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw DataError("cannot open dictionary " + json_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(json_path.string() + ": " + e.what());
  }
  auto sibling = [&](const char* suffix) {
    auto p = json_path;
    p.replace_extension(std::string(suffix) + ".raw");
    return p;
  };
  TrainedDictionary td;
  Dictionary& d = td.dict;
  try {
    if (j.at("features").at("kind") != "grad1+grad2")
      throw ConfigError(json_path.string() + ": unsupported feature kind");
    d.features.patch_size = j.at("features").at("patch_size");
    d.features.stride = j.at("features").at("stride");
    d.features.pca_energy = j.at("features").at("pca_energy");
    d.features.min_feature_norm = j.at("features").at("min_feature_norm");
    d.seed = j.at("seed");
    d.training_hash = j.at("training_hash");
    d.sparsity = j.at("sparsity");
    td.regressors.neighborhood_size = j.at("aplus").at("neighborhood_size");
    td.regressors.ridge = j.at("aplus").at("ridge");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(json_path.string() + ": " + e.what());
  }
  d.projection = from_row_major(read_raw_matrix(sibling(".projection")));
  d.atoms = from_row_major(read_raw_matrix(sibling(".atoms")));
  d.hr_atoms = from_row_major(read_raw_matrix(sibling(".hr_atoms")));
  const Eigen::MatrixXd stacked = from_row_major(read_raw_matrix(sibling(".regressors")));
  require_trained(d, "load_dictionary");
  const auto hr_dim = static_cast<Eigen::Index>(d.features.hr_dim());
  if (stacked.rows() != hr_dim * d.n_atoms() || stacked.cols() != d.atom_dim())
    throw DataError(json_path.string() + ": regressor block has the wrong shape");
  for (int a = 0; a < d.n_atoms(); ++a) td.regressors.regressors.push_back(stacked.middleRows(a * hr_dim, hr_dim));
  if (j.at("n_atoms") != d.n_atoms()) throw DataError(json_path.string() + ": atom count mismatch");
  return td;
}

}  // namespace ensr
