#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "ensr/nn/ops.hpp"
#include "ensr/nn/param_store.hpp"

namespace ensr::nn {

enum class LayerKind { Conv2d, LayerNorm, Relu, LeakyRelu, ConcatSkip, Gap };

/// One entry of a network description, in the "n32s1" vocabulary: conv
/// layers carry channels/kernel/stride, activations their slope, skips the
/// name of the block whose output is concatenated.
struct LayerSpec {
  LayerKind kind = LayerKind::Conv2d;
  std::string name;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
  double slope = 0.0;
  std::string skip_from;
};

const char* layer_kind_name(LayerKind kind);
/// Throws DimensionError on stride outside {1, 2}, even kernels or a
/// leaky slope outside (0, 1).
void validate_layer(const LayerSpec& spec);
nlohmann::json layers_to_json(const std::vector<LayerSpec>& layers);

/// Seven two-conv blocks (conv -> LN -> ReLU, twice); the inputs of blocks
/// 5, 6 and 7 are concatenated with the outputs of blocks 3, 2 and 1. The
/// last conv of block 7 has one output channel and no norm/activation.
struct GeneratorSpec {
  static constexpr std::array<std::array<std::size_t, 2>, 7> kPlan{
      {{32, 32}, {64, 64}, {128, 128}, {256, 256}, {128, 128}, {64, 64}, {32, 1}}};

  std::size_t in_channels = 1;
  double width = 1.0;
  std::size_t kernel = 3;
  /// Adds the mean of the input channels to the output; the last conv then
  /// starts at zero so an untrained network is the identity (or the average).
  bool residual = false;

  /// Scaled output channels of conv `conv` (0 or 1) in block `block` (0-6).
  std::size_t channels(std::size_t block, std::size_t conv) const;
  /// Input channels of a block, including any skip concatenation.
  std::size_t block_input(std::size_t block) const;
  std::vector<LayerSpec> layers() const;
  std::size_t parameter_count() const;
};

/// Four conv -> LN -> LeakyReLU blocks (n64s2, n128s2, n256s2, n512s1), a
/// linear n1s1 conv and global average pooling to one score per sample.
struct DiscriminatorSpec {
  static constexpr std::array<std::size_t, 5> kChannels{64, 128, 256, 512, 1};
  static constexpr std::array<std::size_t, 5> kStrides{2, 2, 2, 1, 1};

  std::size_t in_channels = 1;
  double width = 1.0;
  std::size_t kernel = 3;
  double slope = 0.2;

  std::size_t channels(std::size_t block) const;
  std::vector<LayerSpec> layers() const;
};

/// He-uniform weights (bound sqrt(6 / fan_in)), zero biases, unit LN gain.
ParamStore init_generator(const GeneratorSpec& spec, std::uint64_t seed);
ParamStore init_discriminator(const DiscriminatorSpec& spec, std::uint64_t seed);

Var generator_forward(const GeneratorSpec& spec, const ParamStore& params, const Var& x);
Var discriminator_forward(const DiscriminatorSpec& spec, const ParamStore& params, const Var& x);

/// Fixed feature map Φ used by the perceptual loss.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual Var features(const Var& x) const = 0;
  virtual std::string describe() const = 0;
};

class IdentityExtractor : public FeatureExtractor {
 public:
  Var features(const Var& x) const override { return x; }
  std::string describe() const override { return "identity"; }
};

/// Frozen, seeded stack of conv + ReLU layers; activations of the last layer
/// are the features.
class RandomConvExtractor : public FeatureExtractor {
 public:
  explicit RandomConvExtractor(std::uint64_t seed,
                               std::vector<std::size_t> channels = {16, 32, 64, 64, 64},
                               std::vector<std::size_t> strides = {1, 2, 1, 2, 1});
  Var features(const Var& x) const override;
  std::string describe() const override;

 private:
  std::uint64_t seed_;
  std::vector<std::size_t> channels_;
  std::vector<std::size_t> strides_;
  std::vector<Var> weights_;
  std::vector<Var> biases_;
};

std::unique_ptr<FeatureExtractor> make_extractor(const std::string& name, std::uint64_t seed);

}  // namespace ensr::nn
