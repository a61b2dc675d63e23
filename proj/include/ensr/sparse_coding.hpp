#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace ensr {

/// Sparse code of one signal: selected atom indices (in selection order)
/// and their least-squares coefficients.
struct SparseCode {
  std::vector<Eigen::Index> support;
  Eigen::VectorXd coeffs;
  double residual_norm = 0.0;
};

/// Orthogonal matching pursuit over a column dictionary with unit-norm
/// atoms. Stops after `sparsity` atoms or once the residual norm drops
/// below `tol`. Ties in correlation go to the lowest atom index.
SparseCode omp(const Eigen::MatrixXd& dict, const Eigen::VectorXd& signal, int sparsity,
               double tol = 1e-12);

/// OMP on every column of `signals`.
std::vector<SparseCode> omp_batch(const Eigen::MatrixXd& dict, const Eigen::MatrixXd& signals,
                                  int sparsity);

struct KsvdOptions {
  int n_atoms = 1024;
  int sparsity = 3;
  int iterations = 10;
  std::uint64_t seed = 0;
};

struct KsvdResult {
  Eigen::MatrixXd dict;    ///< signal_dim x n_atoms, unit-norm columns
  std::vector<SparseCode> codes;  ///< one per input signal
  std::vector<double> rms_history;  ///< reconstruction RMS after each round
  int reseeded_atoms = 0;
};

/// K-SVD: alternates OMP coding with rank-1 atom updates. Atoms start as
/// distinct randomly chosen (normalized) samples; atoms that lose all their
/// users are re-seeded from the worst-reconstructed signal. Deterministic
/// for a fixed seed. Needs at least n_atoms nonzero signals.
KsvdResult ksvd(const Eigen::MatrixXd& signals, const KsvdOptions& opts);

}  // namespace ensr
