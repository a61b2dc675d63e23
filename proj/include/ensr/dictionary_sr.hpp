#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ensr/image.hpp"

namespace ensr {

/// LR feature extraction shared by SC and A+: first- and second-order
/// gradient responses of the bicubic-enlarged image, cut into patches on
/// the HR grid and projected onto a PCA basis.
struct FeatureConfig {
  int patch_size = 6;          ///< HR pixels per patch side
  int stride = 2;              ///< HR pixels between neighboring patches
  double pca_energy = 0.999;   ///< fraction of feature energy kept by PCA
  double min_feature_norm = 1e-6;  ///< training patches below this are skipped

  int raw_dim() const { return 4 * patch_size * patch_size; }
  int hr_dim() const { return patch_size * patch_size; }
  std::string describe() const;
  friend bool operator==(const FeatureConfig&, const FeatureConfig&) = default;
};

struct Dictionary {
  FeatureConfig features;
  Eigen::MatrixXd projection;  ///< atom_dim x raw_dim (uncentered PCA)
  Eigen::MatrixXd atoms;       ///< atom_dim x n_atoms, unit-norm columns
  Eigen::MatrixXd hr_atoms;    ///< hr_dim x n_atoms, paired HR residual atoms
  std::uint64_t seed = 0;
  std::uint64_t training_hash = 0;
  int sparsity = 3;

  int atom_dim() const { return static_cast<int>(atoms.rows()); }
  int n_atoms() const { return static_cast<int>(atoms.cols()); }
  bool trained() const { return atoms.size() > 0; }
};

struct AnchoredRegressors {
  int neighborhood_size = 256;
  double ridge = 0.1;
  std::vector<Eigen::MatrixXd> regressors;  ///< one hr_dim x atom_dim map per atom
};

struct DictionaryTrainingOptions {
  int n_atoms = 1024;
  int sparsity = 3;
  int iterations = 10;
  std::uint64_t seed = 0;
  int neighborhood_size = 256;
  double ridge = 0.1;
  FeatureConfig features;
};

struct TrainedDictionary {
  Dictionary dict;
  AnchoredRegressors regressors;
};

/// Feature/target pairs from one HR image: LR = downsample_kspace(HR),
/// features from bicubic(LR), targets are HR - bicubic(LR) patches.
struct TrainingPairs {
  Eigen::MatrixXd features;  ///< raw_dim x n
  Eigen::MatrixXd targets;   ///< hr_dim x n
};
TrainingPairs collect_training_pairs(const std::vector<Image>& hr_images, const FeatureConfig& cfg);

/// Raw (unprojected) feature matrix of an LR image, one column per patch
/// position in row-major order; also returns the bicubic baseline.
struct FeatureField {
  Image baseline;
  Eigen::MatrixXd raw;  ///< raw_dim x n_patches
  std::vector<PatchOffset> offsets;
};
FeatureField extract_features(const Image& lr, const FeatureConfig& cfg);

/// Learns the SC dictionary pair and A+ regressors from HR training images.
TrainedDictionary train_dictionary(const std::vector<Image>& hr_images,
                                   const DictionaryTrainingOptions& opts);

/// Per-patch SC synthesis: OMP code of the projected feature, mapped
/// through the HR atoms.
Eigen::VectorXd sc_patch_residual(const Dictionary& dict, const Eigen::VectorXd& projected,
                                  int sparsity);

/// Index of the atom with the largest |correlation| (first on ties), or -1
/// for an all-zero feature.
Eigen::Index nearest_anchor(const Dictionary& dict, const Eigen::VectorXd& projected);

Image sc_upscale(const Image& lr, const Dictionary& dict, int sparsity);
Image aplus_upscale(const Image& lr, const Dictionary& dict, const AnchoredRegressors& reg);

/// Persists to `<stem>.json` plus raw matrices next to it.
void save_dictionary(const std::filesystem::path& json_path, const TrainedDictionary& td);
TrainedDictionary load_dictionary(const std::filesystem::path& json_path);

}  // namespace ensr
