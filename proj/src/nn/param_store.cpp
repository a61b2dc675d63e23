#include "ensr/nn/param_store.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "ensr/error.hpp"
#include "ensr/image_io.hpp"
#include "ensr/random.hpp"

namespace ensr::nn {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string tensor_file(const char* kind, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%03zu.raw", kind, i);
  return buf;
}

void write_vector(const fs::path& path, const std::vector<double>& values) {
  write_raw_matrix(path, 1, static_cast<std::uint32_t>(values.size()), values);
}

std::vector<double> read_vector(const fs::path& path, std::size_t expected) {
  RawMatrix m = read_raw_matrix(path);
  if (m.values.size() != expected)
    throw DataError("checkpoint tensor " + path.string() + " has " + std::to_string(m.values.size()) +
                    " values, expected " + std::to_string(expected));
  return std::move(m.values);
}

}  // namespace

Var ParamStore::add(const std::string& name, Tensor init) {
  if (contains(name)) throw UsageError("duplicate parameter name: " + name);
  const std::size_t n = init.size();
  names_.push_back(name);
  params_.push_back(leaf(std::move(init)));
  m_.emplace_back(n, 0.0);
  v_.emplace_back(n, 0.0);
  return params_.back();
}

std::size_t ParamStore::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  throw UsageError("unknown parameter: " + name);
}

const Var& ParamStore::get(const std::string& name) const { return params_[index_of(name)]; }

bool ParamStore::contains(const std::string& name) const {
  for (const auto& n : names_)
    if (n == name) return true;
  return false;
}

std::size_t ParamStore::element_count() const {
  std::size_t n = 0;
  for (const Var& p : params_) n += p.size();
  return n;
}

void ParamStore::set(const std::string& name, const Tensor& value) {
  const std::size_t i = index_of(name);
  Tensor& dst = params_[i].node_ptr()->value;
  if (dst.shape != value.shape)
    throw DimensionError("parameter " + name + ": shape " + shape_str(value.shape) + " vs " +
                         shape_str(dst.shape));
  dst.data = value.data;
}

void ParamStore::adam_step(const std::vector<Var>& grads, const AdamConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw ConfigError("Adam learning rate must be positive");
  if (grads.size() != params_.size())
    throw UsageError("adam_step: got " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params_.size()) + " parameters");
  ++step_;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const std::vector<double>& g = grads[i].value().data;
    std::vector<double>& w = params_[i].node_ptr()->value.data;
    if (g.size() != w.size()) throw DimensionError("adam_step: gradient shape mismatch for " + names_[i]);
    std::vector<double>& m = m_[i];
    std::vector<double>& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (std::size_t i = 0; i < params_.size(); ++i) out.add(names_[i], params_[i].value());
  out.m_ = m_;
  out.v_ = v_;
  out.step_ = step_;
  return out;
}

ParamStore ParamStore::frozen() const {
  ParamStore out = clone();
  for (Var& p : out.params_) p = constant(p.value());
  return out;
}

std::uint64_t ParamStore::hash() const {
  std::uint64_t h = fnv1a(nullptr, 0);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    h = fnv1a(names_[i].data(), names_[i].size(), h);
    const Tensor& t = params_[i].value();
    h = fnv1a(t.shape.data(), t.shape.size() * sizeof(std::size_t), h);
    h = fnv1a(t.data.data(), t.data.size() * sizeof(double), h);
  }
  return h;
}

void ParamStore::save(const fs::path& dir, const json& meta) const {
  fs::create_directories(dir);
  json manifest;
  manifest["schema"] = 1;
  manifest["step"] = step_;
  manifest["meta"] = meta;
  json tensors = json::array();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    write_vector(dir / tensor_file("p", i), params_[i].value().data);
    write_vector(dir / tensor_file("m", i), m_[i]);
    write_vector(dir / tensor_file("v", i), v_[i]);
    tensors.push_back({{"name", names_[i]}, {"shape", params_[i].shape()}});
  }
  manifest["tensors"] = tensors;
  manifest["hash"] = hash();
  // The manifest is written last and marks the checkpoint complete.
  write_text_file(dir / "checkpoint.json", manifest.dump(2) + "\n");
}

ParamStore ParamStore::load(const fs::path& dir, json* meta) {
  std::ifstream in(dir / "checkpoint.json");
  if (!in) throw DataError("no checkpoint at " + dir.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw DataError("corrupt checkpoint manifest in " + dir.string() + ": " + e.what());
  }
  ParamStore out;
  const json& tensors = manifest.at("tensors");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const Shape shape = tensors[i].at("shape").get<Shape>();
    const std::size_t n = shape_size(shape);
    out.add(tensors[i].at("name").get<std::string>(), Tensor(shape, read_vector(dir / tensor_file("p", i), n)));
    out.m_[i] = read_vector(dir / tensor_file("m", i), n);
    out.v_[i] = read_vector(dir / tensor_file("v", i), n);
  }
  out.step_ = manifest.at("step").get<long>();
  if (manifest.at("hash").get<std::uint64_t>() != out.hash())
    throw DataError("checkpoint " + dir.string() + " fails its content hash");
  if (meta) *meta = manifest.value("meta", json::object());
  return out;
}

bool checkpoint_exists(const fs::path& dir) { return fs::exists(dir / "checkpoint.json"); }

}  // namespace ensr::nn
