#include "ensr/sparse_coding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ensr/error.hpp"
#include "ensr/random.hpp"

namespace ensr {

SparseCode omp(const Eigen::MatrixXd& dict, const Eigen::VectorXd& signal, int sparsity,
               double tol) {
  SparseCode code;
  Eigen::VectorXd residual = signal;
  code.residual_norm = residual.norm();
  const int limit = std::min<int>(sparsity, static_cast<int>(dict.cols()));
  std::vector<char> taken(static_cast<std::size_t>(dict.cols()), 0);
  Eigen::MatrixXd selected(dict.rows(), 0);
  for (int step = 0; step < limit && code.residual_norm > tol; ++step) {
    const Eigen::VectorXd corr = dict.transpose() * residual;
    Eigen::Index best = -1;
    double best_abs = 0.0;
    for (Eigen::Index k = 0; k < corr.size(); ++k) {
      if (taken[static_cast<std::size_t>(k)]) continue;
      const double a = std::abs(corr(k));
      if (a > best_abs) {
        best_abs = a;
        best = k;
      }
    }
    if (best < 0 || best_abs <= tol) break;
    taken[static_cast<std::size_t>(best)] = 1;
    code.support.push_back(best);
    selected.conservativeResize(Eigen::NoChange, selected.cols() + 1);
    selected.col(selected.cols() - 1) = dict.col(best);
    const Eigen::MatrixXd gram = selected.transpose() * selected;
    code.coeffs = gram.ldlt().solve(selected.transpose() * signal);
    residual = signal - selected * code.coeffs;
    code.residual_norm = residual.norm();
  }
  if (code.support.empty()) code.coeffs.resize(0);
  return code;
}

std::vector<SparseCode> omp_batch(const Eigen::MatrixXd& dict, const Eigen::MatrixXd& signals,
                                  int sparsity) {
  std::vector<SparseCode> codes(static_cast<std::size_t>(signals.cols()));
  for (Eigen::Index i = 0; i < signals.cols(); ++i)
    codes[static_cast<std::size_t>(i)] = omp(dict, signals.col(i), sparsity);
  return codes;
}

namespace {

double reconstruction_rms(const Eigen::MatrixXd& dict, const Eigen::MatrixXd& signals,
                          const std::vector<SparseCode>& codes, std::vector<double>* per_signal) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < signals.cols(); ++i) {
    Eigen::VectorXd r = signals.col(i);
    const SparseCode& c = codes[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < c.support.size(); ++j)
      r -= dict.col(c.support[j]) * c.coeffs(static_cast<Eigen::Index>(j));
    const double e = r.squaredNorm();
    if (per_signal) (*per_signal)[static_cast<std::size_t>(i)] = e;
    total += e;
  }
  return std::sqrt(total / static_cast<double>(signals.size()));
}

}  // namespace

KsvdResult ksvd(const Eigen::MatrixXd& signals, const KsvdOptions& opts) {
  if (opts.n_atoms < 1 || opts.sparsity < 1)
    throw ConfigError("ksvd: n_atoms and sparsity must be positive");
  std::vector<Eigen::Index> usable;
  for (Eigen::Index i = 0; i < signals.cols(); ++i)
    if (signals.col(i).norm() > 0.0) usable.push_back(i);
  if (usable.size() < static_cast<std::size_t>(opts.n_atoms)) {
    throw DataError("ksvd: need at least " + std::to_string(opts.n_atoms) +
                    " nonzero training signals, got " + std::to_string(usable.size()));
  }

  Rng rng(opts.seed);
  rng.shuffle(usable);
  KsvdResult out;
  const Eigen::Index dim = signals.rows();
  out.dict.resize(dim, opts.n_atoms);
  for (int k = 0; k < opts.n_atoms; ++k) {
    const Eigen::VectorXd s = signals.col(usable[static_cast<std::size_t>(k)]);
    out.dict.col(k) = s / s.norm();
  }

  const std::size_t n = static_cast<std::size_t>(signals.cols());
  std::vector<double> errors(n, 0.0);
  for (int iter = 0; iter < opts.iterations; ++iter) {
    out.codes = omp_batch(out.dict, signals, opts.sparsity);

    // users[k]: (signal, position in that signal's support)
    std::vector<std::vector<std::pair<std::size_t, Eigen::Index>>> users(
        static_cast<std::size_t>(opts.n_atoms));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < out.codes[i].support.size(); ++j)
        users[static_cast<std::size_t>(out.codes[i].support[j])].emplace_back(
            i, static_cast<Eigen::Index>(j));

    reconstruction_rms(out.dict, signals, out.codes, &errors);
    std::vector<char> reseed_used(n, 0);

    for (int k = 0; k < opts.n_atoms; ++k) {
      const auto& uk = users[static_cast<std::size_t>(k)];
      if (uk.empty()) {
        // Dead atom: restart it at the worst-represented signal.
        std::size_t worst = n;
        double worst_err = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (reseed_used[i] || signals.col(static_cast<Eigen::Index>(i)).norm() == 0.0) continue;
          if (errors[i] > worst_err) {
            worst_err = errors[i];
            worst = i;
          }
        }
        if (worst < n) {
          reseed_used[worst] = 1;
          const Eigen::VectorXd s = signals.col(static_cast<Eigen::Index>(worst));
          out.dict.col(k) = s / s.norm();
          errors[worst] = 0.0;
          ++out.reseeded_atoms;
        }
        continue;
      }
      // Residual of the users with atom k's contribution added back.
      Eigen::MatrixXd e(dim, static_cast<Eigen::Index>(uk.size()));
      for (std::size_t u = 0; u < uk.size(); ++u) {
        const auto [i, pos] = uk[u];
        const SparseCode& c = out.codes[i];
        Eigen::VectorXd r = signals.col(static_cast<Eigen::Index>(i));
        for (std::size_t j = 0; j < c.support.size(); ++j)
          if (static_cast<Eigen::Index>(j) != pos)
            r -= out.dict.col(c.support[j]) * c.coeffs(static_cast<Eigen::Index>(j));
        e.col(static_cast<Eigen::Index>(u)) = r;
      }
      const Eigen::MatrixXd cov = e * e.transpose();
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
      Eigen::VectorXd atom = eig.eigenvectors().col(dim - 1);
      if (atom.dot(out.dict.col(k)) < 0.0) atom = -atom;
      atom.normalize();
      out.dict.col(k) = atom;
      const Eigen::VectorXd coeff = e.transpose() * atom;
      for (std::size_t u = 0; u < uk.size(); ++u) {
        const auto [i, pos] = uk[u];
        out.codes[i].coeffs(pos) = coeff(static_cast<Eigen::Index>(u));
      }
    }
    out.rms_history.push_back(reconstruction_rms(out.dict, signals, out.codes, nullptr));
  }
  out.codes = omp_batch(out.dict, signals, opts.sparsity);
  return out;
}

}  // namespace ensr
