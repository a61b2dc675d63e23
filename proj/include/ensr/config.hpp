#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ensr/corpus.hpp"
#include "ensr/gan.hpp"
#include "ensr/metrics.hpp"

namespace ensr {

/// Every tunable of a run. Defaults follow the paper where it states a
/// value; the rest are documented choices listed by deviations().
struct RunConfig {
  std::uint64_t seed = 1;
  CorpusConfig corpus;
  std::size_t patch_size = 80;
  std::size_t patch_stride = 40;

  double gan_width = 1.0;
  bool gan_residual = false;
  int gan_epochs = 50;
  std::size_t gan_batch = 64;
  double gan_lr = 2e-5;
  double gan_beta1 = 0.0;
  double gan_beta2 = 0.9;
  int gan_n_critic = 5;
  LossWeights weights;
  std::string extractor = "random_conv";
  std::uint64_t extractor_seed = 7;
  int gan_jobs = 0;  ///< concurrent GAN trainings; 0 = available parallelism (max 5)

  double ens_width = 1.0;
  bool ens_residual = false;
  int ens_epochs = 80;
  std::size_t ens_batch = 4;
  double ens_lr = 2e-5;
  int ens_inputs = 5;

  SsimOptions ssim;

  RunConfig();

  /// Throws ConfigError on inconsistent values.
  void validate() const;
  /// Canonical `key = value` lines (no comments).
  std::string canonical() const;
  /// canonical() followed by the deviations as comments.
  std::string echo() const;
  std::uint64_t hash() const;
  /// Choices that are not stated by the paper or that differ from it.
  std::vector<std::string> deviations() const;
};

/// Desk-scale preset: 64x64 phantoms, 32x32 patches, width 1/4, short runs.
RunConfig desk_config();

/// Strict parser: unknown or repeated keys and malformed values throw
/// ConfigError naming the line. `base` supplies the unset values.
RunConfig parse_config(const std::string& text, const RunConfig& base = RunConfig{});
RunConfig load_config(const std::string& path, const RunConfig& base = RunConfig{});

/// Applies one `key = value` override (used for command-line flags).
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::vector<std::string> config_keys();

}  // namespace ensr
