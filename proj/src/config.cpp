#include "ensr/config.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "ensr/error.hpp"
#include "ensr/random.hpp"

namespace ensr {
namespace {

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}
std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(long v) { return std::to_string(v); }

double parse_double(const std::string& key, const std::string& s) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE)
    throw ConfigError(key + ": '" + s + "' is not a number");
  return v;
}

long parse_long(const std::string& key, const std::string& s) {
  long v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw ConfigError(key + ": '" + s + "' is not an integer");
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw ConfigError(key + ": '" + s + "' is not a non-negative integer");
  return v;
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
  const char* paper = nullptr;  // value stated by the paper, if any
  bool hashed = true;           // false for settings that cannot change results
};

template <typename Get>
Field real_field(std::string key, Get ref, const char* paper = nullptr) {
  Field f;
  f.key = key;
  f.get = [ref](const RunConfig& c) { RunConfig copy = c;
    return fmt(ref(copy)); };
  f.set = [ref, key](RunConfig& c, const std::string& s) { ref(c) = parse_double(key, s); };
  f.paper = paper;
  return f;
}

template <typename T, typename Get>
Field int_field(std::string key, Get ref, const char* paper = nullptr) {
  Field f;
  f.key = key;
  f.get = [ref](const RunConfig& c) { RunConfig copy = c;
    return fmt(static_cast<long>(ref(copy))); };
  f.set = [ref, key](RunConfig& c, const std::string& s) {
    const long v = parse_long(key, s);
    if constexpr (std::is_unsigned_v<T>) {
      if (v < 0) throw ConfigError(key + " must be non-negative");
    }
    ref(c) = static_cast<T>(v);
  };
  f.paper = paper;
  return f;
}

template <typename Get>
Field u64_field(std::string key, Get ref) {
  Field f;
  f.key = key;
  f.get = [ref](const RunConfig& c) { RunConfig copy = c;
    return fmt(ref(copy)); };
  f.set = [ref, key](RunConfig& c, const std::string& s) { ref(c) = parse_u64(key, s); };
  return f;
}

template <typename Get>
Field bool_field(std::string key, Get ref, const char* paper = nullptr) {
  Field f;
  f.key = key;
  f.get = [ref](const RunConfig& c) {
    RunConfig copy = c;
    return std::string(ref(copy) ? "1" : "0");
  };
  f.set = [ref, key](RunConfig& c, const std::string& s) {
    if (s == "1" || s == "true")
      ref(c) = true;
    else if (s == "0" || s == "false")
      ref(c) = false;
    else
      throw ConfigError(key + ": '" + s + "' is not 0/1/true/false");
  };
  f.paper = paper;
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> all = [] {
    std::vector<Field> f;
    f.push_back(u64_field("seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; }));
    f.push_back(int_field<int>("corpus.n_train", [](RunConfig& c) -> int& { return c.corpus.n_train; }));
    f.push_back(int_field<int>("corpus.n_test", [](RunConfig& c) -> int& { return c.corpus.n_test; }));
    {
      Field d;
      d.key = "corpus.dims";
      d.get = [](const RunConfig& c) { return fmt(static_cast<long>(c.corpus.phantom.height)); };
      d.set = [](RunConfig& c, const std::string& s) {
        const long v = parse_long("corpus.dims", s);
        if (v <= 0) throw ConfigError("corpus.dims must be positive");
        c.corpus.phantom.height = c.corpus.phantom.width = static_cast<std::size_t>(v);
      };
      d.paper = "320";
      f.push_back(d);
    }
    f.push_back(real_field("corpus.train_fraction", [](RunConfig& c) -> double& { return c.corpus.train_fraction; }, "0.8"));
    f.push_back(int_field<int>("phantom.min_ellipses", [](RunConfig& c) -> int& { return c.corpus.phantom.min_ellipses; }));
    f.push_back(int_field<int>("phantom.max_ellipses", [](RunConfig& c) -> int& { return c.corpus.phantom.max_ellipses; }));
    f.push_back(real_field("phantom.background", [](RunConfig& c) -> double& { return c.corpus.phantom.background; }));
    f.push_back(real_field("phantom.texture", [](RunConfig& c) -> double& { return c.corpus.phantom.texture; }));
    f.push_back(real_field("phantom.noise_sigma", [](RunConfig& c) -> double& { return c.corpus.phantom.noise_sigma; }));
    f.push_back(int_field<int>("dict.images", [](RunConfig& c) -> int& { return c.corpus.dict_images; }));
    f.push_back(int_field<int>("dict.n_atoms", [](RunConfig& c) -> int& { return c.corpus.dictionary.n_atoms; }, "1024"));
    f.push_back(int_field<int>("dict.sparsity", [](RunConfig& c) -> int& { return c.corpus.dictionary.sparsity; }));
    f.push_back(int_field<int>("dict.iterations", [](RunConfig& c) -> int& { return c.corpus.dictionary.iterations; }));
    f.push_back(int_field<int>("dict.neighborhood", [](RunConfig& c) -> int& { return c.corpus.dictionary.neighborhood_size; }));
    f.push_back(real_field("dict.ridge", [](RunConfig& c) -> double& { return c.corpus.dictionary.ridge; }));
    f.push_back(int_field<int>("dict.patch", [](RunConfig& c) -> int& { return c.corpus.dictionary.features.patch_size; }));
    f.push_back(int_field<int>("dict.stride", [](RunConfig& c) -> int& { return c.corpus.dictionary.features.stride; }));
    f.push_back(real_field("dict.pca_energy", [](RunConfig& c) -> double& { return c.corpus.dictionary.features.pca_energy; }));
    f.push_back(int_field<std::size_t>("patch.size", [](RunConfig& c) -> std::size_t& { return c.patch_size; }, "80"));
    f.push_back(int_field<std::size_t>("patch.stride", [](RunConfig& c) -> std::size_t& { return c.patch_stride; }, "40"));
    f.push_back(real_field("gan.width", [](RunConfig& c) -> double& { return c.gan_width; }, "1"));
    f.push_back(bool_field("gan.residual", [](RunConfig& c) -> bool& { return c.gan_residual; }, "0"));
    f.push_back(int_field<int>("gan.epochs", [](RunConfig& c) -> int& { return c.gan_epochs; }, "50"));
    f.push_back(int_field<std::size_t>("gan.batch", [](RunConfig& c) -> std::size_t& { return c.gan_batch; }, "64"));
    f.push_back(real_field("gan.lr", [](RunConfig& c) -> double& { return c.gan_lr; }, "2e-05"));
    f.push_back(real_field("gan.beta1", [](RunConfig& c) -> double& { return c.gan_beta1; }));
    f.push_back(real_field("gan.beta2", [](RunConfig& c) -> double& { return c.gan_beta2; }));
    f.push_back(int_field<int>("gan.n_critic", [](RunConfig& c) -> int& { return c.gan_n_critic; }));
    f.push_back(real_field("gan.gp_coef", [](RunConfig& c) -> double& { return c.weights.gp_coef; }));
    f.push_back(real_field("gan.lambda_gra", [](RunConfig& c) -> double& { return c.weights.gradient; }, "0.1"));
    f.push_back(real_field("gan.lambda_mse", [](RunConfig& c) -> double& { return c.weights.mse; }, "0.1"));
    f.push_back(real_field("gan.lambda_per", [](RunConfig& c) -> double& { return c.weights.perceptual; }, "1"));
    {
      Field e;
      e.key = "gan.extractor";
      e.get = [](const RunConfig& c) { return c.extractor; };
      e.set = [](RunConfig& c, const std::string& s) { c.extractor = s; };
      f.push_back(e);
    }
    f.push_back(u64_field("gan.extractor_seed", [](RunConfig& c) -> std::uint64_t& { return c.extractor_seed; }));
    f.push_back(int_field<int>("gan.jobs", [](RunConfig& c) -> int& { return c.gan_jobs; }));
    f.back().hashed = false;
    f.push_back(real_field("ens.width", [](RunConfig& c) -> double& { return c.ens_width; }, "1"));
    f.push_back(bool_field("ens.residual", [](RunConfig& c) -> bool& { return c.ens_residual; }, "0"));
    f.push_back(int_field<int>("ens.epochs", [](RunConfig& c) -> int& { return c.ens_epochs; }, "80"));
    f.push_back(int_field<std::size_t>("ens.batch", [](RunConfig& c) -> std::size_t& { return c.ens_batch; }, "4"));
    f.push_back(real_field("ens.lr", [](RunConfig& c) -> double& { return c.ens_lr; }, "2e-05"));
    f.push_back(int_field<int>("ens.inputs", [](RunConfig& c) -> int& { return c.ens_inputs; }, "5"));
    f.push_back(int_field<int>("eval.ssim_window", [](RunConfig& c) -> int& { return c.ssim.window; }));
    f.push_back(real_field("eval.ssim_sigma", [](RunConfig& c) -> double& { return c.ssim.sigma; }));
    f.push_back(real_field("eval.ssim_k1", [](RunConfig& c) -> double& { return c.ssim.k1; }));
    f.push_back(real_field("eval.ssim_k2", [](RunConfig& c) -> double& { return c.ssim.k2; }));
    return f;
  }();
  return all;
}

const Field& find_field(const std::string& key) {
  for (const Field& f : fields())
    if (f.key == key) return f;
  throw ConfigError("unknown config key '" + key + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig::RunConfig() = default;

void RunConfig::validate() const {
  corpus.phantom.validate();
  const std::size_t dims = corpus.phantom.height;
  if (corpus.n_train < 1 || corpus.n_test < 1) throw ConfigError("corpus.n_train and corpus.n_test must be >= 1");
  if (!(corpus.train_fraction > 0.0 && corpus.train_fraction <= 1.0))
    throw ConfigError("corpus.train_fraction must lie in (0, 1]");
  if (train_count(corpus.n_train, corpus.train_fraction) < 1) throw ConfigError("train split would be empty");
  if (patch_size == 0 || patch_stride == 0 || patch_size > dims)
    throw ConfigError("patch.size must lie in [1, corpus.dims] and patch.stride must be positive");
  if ((dims - patch_size) % patch_stride != 0)
    throw ConfigError("(corpus.dims - patch.size) must be a multiple of patch.stride");
  if (!(gan_width > 0) || !(ens_width > 0)) throw ConfigError("network widths must be positive");
  if (gan_epochs < 1 || ens_epochs < 1) throw ConfigError("epoch counts must be >= 1");
  if (gan_batch == 0 || ens_batch == 0) throw ConfigError("batch sizes must be >= 1");
  if (!(gan_lr > 0) || !(ens_lr > 0)) throw ConfigError("learning rates must be positive");
  if (gan_n_critic < 1) throw ConfigError("gan.n_critic must be >= 1");
  if (weights.gradient < 0 || weights.mse < 0 || weights.perceptual < 0 || weights.gp_coef < 0)
    throw ConfigError("loss weights must be >= 0");
  if (extractor != "random_conv" && extractor != "identity")
    throw ConfigError("gan.extractor must be random_conv or identity");
  if (gan_jobs < 0) throw ConfigError("gan.jobs must be >= 0");
  if (ens_inputs != 3 && ens_inputs != 5) throw ConfigError("ens.inputs must be 3 or 5");
  if (corpus.dictionary.n_atoms < 1 || corpus.dictionary.sparsity < 1 || corpus.dictionary.iterations < 0)
    throw ConfigError("dictionary sizes must be positive");
  if (ssim.window < 1 || ssim.window % 2 == 0 || static_cast<std::size_t>(ssim.window) > dims)
    throw ConfigError("eval.ssim_window must be odd and fit the image");
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const Field& f : fields()) out += f.key + " = " + f.get(*this) + "\n";
  return out;
}

std::vector<std::string> RunConfig::deviations() const {
  std::vector<std::string> d = {
      "perceptual features: fixed seeded random conv stack (" + extractor +
          ") instead of pretrained VGG19 layer-16 activations",
      "conv kernels 3x3 with zero padding 1 (kernel size and padding unstated)",
      "WGAN-GP settings gp_coef, n_critic and Adam betas (0, 0.9) follow the cited WGAN-GP recipe",
      "skip pairing block1->block7, block2->block6, block3->block5",
      "last conv of the generator and of the discriminator is linear (no norm or activation)",
      "feature extractor strides 1,2,1,2,1 to bound its cost",
      "SC/A+ dictionary learned on held-out synthetic phantoms",
  };
  for (const Field& f : fields()) {
    if (!f.paper) continue;
    const std::string v = f.get(*this);
    if (v != f.paper) d.push_back("desk-scale override: " + f.key + " = " + v + " (paper: " + f.paper + ")");
  }
  return d;
}

std::string RunConfig::echo() const {
  std::string out = canonical();
  out += "# deviations from the paper:\n";
  for (const std::string& d : deviations()) out += "#   " + d + "\n";
  return out;
}

std::uint64_t RunConfig::hash() const {
  std::string c;
  for (const Field& f : fields())
    if (f.hashed) c += f.key + " = " + f.get(*this) + "\n";
  return fnv1a(c.data(), c.size());
}

RunConfig desk_config() {
  RunConfig c;
  c.corpus.phantom.height = c.corpus.phantom.width = 64;
  c.corpus.n_train = 8;
  c.corpus.n_test = 4;
  c.corpus.dict_images = 4;
  c.corpus.dictionary.n_atoms = 128;
  c.corpus.dictionary.iterations = 5;
  c.patch_size = 32;
  c.patch_stride = 16;
  c.gan_width = 0.25;
  c.gan_residual = true;
  c.gan_epochs = 5;
  c.gan_batch = 8;
  c.gan_lr = 1e-3;
  c.ens_width = 0.25;
  c.ens_residual = true;
  c.ens_epochs = 20;
  c.ens_batch = 4;
  c.ens_lr = 1e-3;
  c.gan_jobs = 0;
  return c;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  find_field(key).set(cfg, value);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const Field& f : fields()) out.push_back(f.key);
  return out;
}

RunConfig parse_config(const std::string& text, const RunConfig& base) {
  RunConfig cfg = base;
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError("config line " + std::to_string(lineno) + ": repeated key " + key);
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_config(const std::string& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), base);
}

}  // namespace ensr
