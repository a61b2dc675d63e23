#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ensr/nn/graph.hpp"

namespace ensr::nn {

struct AdamConfig {
  double lr = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Ordered named parameters with their Adam moments. Parameters are graph
/// leaves whose values are updated in place by adam_step, so a Var handed
/// out by get() stays valid across steps.
class ParamStore {
 public:
  Var add(const std::string& name, Tensor init);
  const Var& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::size_t size() const { return params_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Var>& params() const { return params_; }
  std::size_t element_count() const;
  long step() const { return step_; }

  /// One bias-corrected Adam update; grads align with params().
  void adam_step(const std::vector<Var>& grads, const AdamConfig& cfg);

  /// Overwrites a parameter value (shape must match).
  void set(const std::string& name, const Tensor& value);
  /// Deep copy (independent leaves and moments).
  ParamStore clone() const;
  /// Copy whose parameters are constants: gradients do not flow into it.
  ParamStore frozen() const;
  /// FNV-1a over names, shapes and values.
  std::uint64_t hash() const;

  /// Writes params and moments as raw tensors next to a JSON manifest that
  /// also carries `meta`. Loading restores values bit-exactly.
  void save(const std::filesystem::path& dir, const nlohmann::json& meta) const;
  static ParamStore load(const std::filesystem::path& dir, nlohmann::json* meta = nullptr);

 private:
  std::size_t index_of(const std::string& name) const;

  std::vector<std::string> names_;
  std::vector<Var> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  long step_ = 0;
};

/// True if a checkpoint manifest exists in `dir`.
bool checkpoint_exists(const std::filesystem::path& dir);

}  // namespace ensr::nn
