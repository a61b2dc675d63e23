#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ensr/image.hpp"
#include "ensr/nn/layers.hpp"

namespace ensr {

/// Training pairs as batched tensors: inputs (N, C, p, p), targets (N, 1, p, p).
struct PairedPatches {
  nn::Tensor inputs;
  nn::Tensor targets;

  std::size_t count() const { return inputs.shape.empty() ? 0 : inputs.dim(0); }
  std::size_t channels() const { return inputs.dim(1); }
  /// Copies the listed samples into a new batch.
  PairedPatches gather(const std::vector<std::size_t>& idx) const;
};

/// Patches of every channel image (all same dims) and of the target, cut on
/// one grid, appended to `out`.
void append_patches(PairedPatches& out, const std::vector<const Image*>& channels, const Image& target,
                    std::size_t patch_size, std::size_t stride);

/// (1, C, H, W) tensor from same-sized images.
nn::Tensor images_to_tensor(const std::vector<const Image*>& channels);
Image tensor_to_image(const nn::Tensor& t, std::size_t sample, double intensity_max);

struct LossWeights {
  double gradient = 0.1;    ///< λ1
  double mse = 0.1;         ///< λ2
  double perceptual = 1.0;  ///< λ3
  double gp_coef = 10.0;
};

struct GanConfig {
  nn::GeneratorSpec generator;
  nn::DiscriminatorSpec discriminator;
  LossWeights weights;
  int epochs = 50;
  std::size_t batch = 64;
  double lr = 2e-5;
  double beta1 = 0.0;
  double beta2 = 0.9;
  int n_critic = 5;
  std::uint64_t seed = 0;
  std::string extractor = "random_conv";
  std::uint64_t extractor_seed = 7;
  /// Overfit mode: train on the first `batch` samples only, for exactly
  /// `max_g_steps` generator updates (epochs are ignored).
  bool single_batch = false;
  int max_g_steps = 0;
  /// When set, checkpoints (generator/, discriminator/) and losses.csv are
  /// written here after every epoch.
  std::filesystem::path out_dir;
  nlohmann::json meta = nlohmann::json::object();
};

// Generator loss terms, each normalized per element.
nn::Var adv_loss(const nn::Var& d_fake);
nn::Var gradient_loss(const nn::Var& fake, const nn::Var& real);
nn::Var perceptual_loss(const nn::Var& fake, const nn::Var& real, const nn::FeatureExtractor& phi);

using Critic = std::function<nn::Var(const nn::Var&)>;

/// mean_n (||∇_x̂ D(x̂_n)||₂ - 1)² at x̂ = ε real + (1 - ε) fake, one uniform
/// ε per sample drawn from `seed`. Differentiable with respect to D's
/// parameters (second-order pass).
nn::Var gradient_penalty(const Critic& critic, const nn::Tensor& real, const nn::Tensor& fake, std::uint64_t seed);

struct GeneratorLoss {
  nn::Var total, adv, gra, mse, per;
};
GeneratorLoss generator_objective(const nn::Var& fake, const nn::Var& real, const nn::Var& d_fake,
                                  const nn::FeatureExtractor& phi, const LossWeights& w);

/// One row of losses.csv. Generator terms are means over the epoch's
/// generator steps, L_D over its critic steps.
struct LossRecord {
  int epoch = 0;
  long g_steps = 0;
  double adv = 0, gra = 0, mse = 0, per = 0, d = 0;
};

struct GanResult {
  nn::ParamStore generator;
  nn::ParamStore discriminator;
  std::vector<LossRecord> epochs;
  std::vector<double> step_mse;  ///< L_mse at every generator step (before the update)
};

using EpochCallback = std::function<void(const LossRecord&)>;

/// WGAN-GP training: one critic step per batch, one generator step after
/// every n_critic critic steps. Throws NumericError on a non-finite loss
/// after saving the last good state under out_dir/last_good.
GanResult train_gan(const PairedPatches& data, const GanConfig& cfg, const EpochCallback& on_epoch = {});

std::string loss_csv(const std::vector<LossRecord>& rows);

nlohmann::json generator_spec_to_json(const nn::GeneratorSpec& spec);
nn::GeneratorSpec generator_spec_from_json(const nlohmann::json& j);

/// Whole-image inference G(plr).
Image predict_image(const nn::GeneratorSpec& spec, const nn::ParamStore& params,
                    const std::vector<const Image*>& channels, double intensity_max);

}  // namespace ensr
