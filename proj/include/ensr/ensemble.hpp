#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "ensr/gan.hpp"
#include "ensr/image.hpp"
#include "ensr/nn/layers.hpp"

namespace ensr {

/// Per-method SR predictions of one image, in SRMethod order.
struct PredictionStack {
  std::vector<SRMethod> methods;
  std::vector<Image> images;

  /// Throws unless non-empty, one image per method, same dims.
  void validate() const;
  /// Members for the given methods, in the order given.
  PredictionStack subset(const std::vector<SRMethod>& keep) const;
  std::vector<const Image*> pointers() const;
};

/// Pixelwise mean over the members.
Image average_ensemble(const PredictionStack& stack);

/// Hash of a channel order; stored in integrator checkpoints.
std::uint64_t method_order_hash(const std::vector<SRMethod>& methods);

/// Generator-shaped network with `n_inputs` input channels. Only 3 and 5
/// inputs are accepted unless `allow_other` is set.
nn::GeneratorSpec integrator_spec(std::size_t n_inputs, double width, bool allow_other = false);

struct IntegratorConfig {
  std::vector<SRMethod> methods{kAllMethods.begin(), kAllMethods.end()};
  double width = 1.0;
  bool residual = false;
  int epochs = 80;
  std::size_t batch = 4;
  double lr = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;  ///< model/ and losses.csv when set
  nlohmann::json meta = nlohmann::json::object();
};

struct IntegratorModel {
  nn::GeneratorSpec spec;
  nn::ParamStore params;
  std::vector<SRMethod> methods;

  void save(const std::filesystem::path& dir, nlohmann::json meta = nlohmann::json::object()) const;
  static IntegratorModel load(const std::filesystem::path& dir);
};

struct IntegratorRecord {
  int epoch = 0;
  double train_mae = 0;
};

struct IntegratorResult {
  IntegratorModel model;
  std::vector<IntegratorRecord> epochs;
};

/// MAE-supervised training on patch pairs whose input channels follow
/// cfg.methods.
IntegratorResult train_integrator(const PairedPatches& data, const IntegratorConfig& cfg,
                                  const std::function<void(const IntegratorRecord&)>& on_epoch = {});

std::string integrator_csv(const std::vector<IntegratorRecord>& rows);

/// Final SR image. The stack's method order must hash to the model's.
Image integrate(const IntegratorModel& model, const PredictionStack& stack);

}  // namespace ensr
