#include "ensr/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "ensr/error.hpp"
#include "ensr/image_io.hpp"
#include "ensr/interpolation.hpp"
#include "ensr/kspace.hpp"
#include "ensr/random.hpp"

namespace ensr {
namespace fs = std::filesystem;
using nlohmann::json;

json CorpusConfig::to_json() const {
  return {
      {"phantom",
       {{"height", phantom.height},
        {"width", phantom.width},
        {"min_ellipses", phantom.min_ellipses},
        {"max_ellipses", phantom.max_ellipses},
        {"background", phantom.background},
        {"texture", phantom.texture},
        {"noise_sigma", phantom.noise_sigma}}},
      {"n_train", n_train},
      {"n_test", n_test},
      {"train_fraction", train_fraction},
      {"seed", seed},
      {"dict_images", dict_images},
      {"dictionary",
       {{"n_atoms", dictionary.n_atoms},
        {"sparsity", dictionary.sparsity},
        {"iterations", dictionary.iterations},
        {"seed", dictionary.seed},
        {"neighborhood_size", dictionary.neighborhood_size},
        {"ridge", dictionary.ridge},
        {"features", dictionary.features.describe()}}},
  };
}

std::uint64_t CorpusConfig::hash() const {
  const std::string s = to_json().dump();
  return fnv1a(s.data(), s.size());
}

std::vector<CorpusEntry> CorpusManifest::split(const std::string& name) const {
  std::vector<CorpusEntry> out;
  for (const auto& e : entries)
    if (e.split == name) out.push_back(e);
  std::sort(out.begin(), out.end(), [](const CorpusEntry& a, const CorpusEntry& b) { return a.id < b.id; });
  return out;
}

fs::path CorpusManifest::entry_dir(const CorpusEntry& e) const { return root / e.split / e.id; }

fs::path CorpusManifest::dictionary_path() const { return root / "dictionary" / "dictionary.json"; }

std::string role_file(const std::string& role) { return role + ".raw"; }

std::string plr_role(SRMethod m) { return "plr_" + std::string(method_name(m)); }

int train_count(int n_pool, double train_fraction) {
  return static_cast<int>(std::lround(train_fraction * n_pool));
}

Image process_lr(const Image& lr, SRMethod m, const TrainedDictionary& dict) {
  switch (m) {
    case SRMethod::Zip: return zip_upscale(lr, 2 * lr.height(), 2 * lr.width());
    case SRMethod::Bicubic: return bicubic_upscale(lr, 2);
    case SRMethod::Nedi: return nedi_upscale(lr, 2);
    case SRMethod::SparseCoding: return sc_upscale(lr, dict.dict, dict.dict.sparsity);
    case SRMethod::APlus: return aplus_upscale(lr, dict.dict, dict.regressors);
  }
  throw UsageError("unknown SR method");
}

std::vector<Image> process_lr(const Image& lr, const TrainedDictionary& dict) {
  std::vector<Image> out;
  for (SRMethod m : kAllMethods) out.push_back(process_lr(lr, m, dict));
  return out;
}

namespace {

std::string image_id(int k) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "img%04d", k);
  return buf;
}

json entry_json(const CorpusEntry& e) {
  return {{"id", e.id}, {"split", e.split}, {"height", e.height}, {"width", e.width}, {"seed", e.seed}};
}

}  // namespace

CorpusManifest build_corpus(const fs::path& root, const CorpusConfig& cfg, const ProgressFn& progress) {
  cfg.phantom.validate();
  if (cfg.n_train < 1 || cfg.n_test < 0) throw ConfigError("corpus needs n_train >= 1 and n_test >= 0");
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction <= 1.0))
    throw ConfigError("train_fraction must lie in (0, 1]");
  const auto say = [&](const std::string& s) {
    if (progress) progress(s);
  };

  fs::create_directories(root);
  fs::remove(root / "manifest.json");

  std::vector<Image> dict_images;
  for (int k = 0; k < cfg.dict_images; ++k)
    dict_images.push_back(generate_phantom(cfg.phantom, derive_seed(cfg.seed, 50000 + static_cast<std::uint64_t>(k))));
  say("training dictionary on " + std::to_string(dict_images.size()) + " held-out phantoms");
  const TrainedDictionary dict = train_dictionary(dict_images, cfg.dictionary);

  CorpusManifest m;
  m.root = root;
  m.config = cfg.to_json();
  m.config_hash = cfg.hash();
  save_dictionary(m.dictionary_path(), dict);

  const int n_train = train_count(cfg.n_train, cfg.train_fraction);
  const int total = cfg.n_train + cfg.n_test;
  for (int k = 0; k < total; ++k) {
    CorpusEntry e;
    e.id = image_id(k);
    e.split = k < n_train ? "train" : (k < cfg.n_train ? "valid" : "test");
    e.height = cfg.phantom.height;
    e.width = cfg.phantom.width;
    e.seed = derive_seed(cfg.seed, 10000 + static_cast<std::uint64_t>(k));
    const Image hr = generate_phantom(cfg.phantom, e.seed);
    const Image lr = downsample_kspace(hr);
    const fs::path dir = m.entry_dir(e);
    fs::create_directories(dir);
    write_raw(dir / role_file("hr"), hr);
    write_raw(dir / role_file("lr"), lr);
    for (SRMethod method : kAllMethods) write_raw(dir / role_file(plr_role(method)), process_lr(lr, method, dict));
    m.entries.push_back(e);
    say("wrote " + e.split + "/" + e.id);
  }

  json j;
  j["schema"] = 1;
  j["config_hash"] = m.config_hash;
  j["config"] = m.config;
  j["entries"] = json::array();
  for (const auto& e : m.entries) j["entries"].push_back(entry_json(e));
  write_text_file(root / "manifest.json", j.dump(2) + "\n");
  return m;
}

CorpusManifest load_manifest(const fs::path& root) {
  std::ifstream in(root / "manifest.json");
  if (!in) throw DataError("no manifest.json in " + root.string() + " (missing or partial corpus)");
  CorpusManifest m;
  m.root = root;
  try {
    json j;
    in >> j;
    if (j.at("schema").get<int>() != 1) throw DataError("unsupported corpus schema in " + root.string());
    m.config_hash = j.at("config_hash").get<std::uint64_t>();
    m.config = j.at("config");
    for (const auto& je : j.at("entries")) {
      CorpusEntry e;
      e.id = je.at("id").get<std::string>();
      e.split = je.at("split").get<std::string>();
      e.height = je.at("height").get<std::size_t>();
      e.width = je.at("width").get<std::size_t>();
      e.seed = je.at("seed").get<std::uint64_t>();
      if (e.split != "train" && e.split != "valid" && e.split != "test")
        throw DataError("entry " + e.id + " has unknown split " + e.split);
      m.entries.push_back(e);
    }
  } catch (const json::exception& ex) {
    throw DataError("malformed corpus manifest in " + root.string() + ": " + ex.what());
  }
  return m;
}

Image load_role(const CorpusManifest& m, const CorpusEntry& e, const std::string& role) {
  const fs::path p = m.entry_dir(e) / role_file(role);
  if (!fs::exists(p)) throw DataError("corpus entry " + e.id + " is missing role " + role + " (" + p.string() + ")");
  return read_raw(p);
}

std::vector<std::size_t> iteration_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (seed != 0) {
    Rng rng(seed);
    rng.shuffle(idx);
  }
  return idx;
}

std::vector<std::string> verify_corpus(const CorpusManifest& m) {
  std::vector<std::string> problems;
  for (const auto& e : m.entries) {
    try {
      const Image hr = load_role(m, e, "hr");
      if (hr.height() != e.height || hr.width() != e.width) problems.push_back(e.id + ": hr dims differ from manifest");
      if (!hr.all_finite()) problems.push_back(e.id + ": hr has non-finite values");
      const Image lr = load_role(m, e, "lr");
      if (!(downsample_kspace(hr) == lr)) problems.push_back(e.id + ": lr is not downsample_kspace(hr)");
      for (SRMethod method : kAllMethods) {
        const Image plr = load_role(m, e, plr_role(method));
        if (plr.height() != hr.height() || plr.width() != hr.width())
          problems.push_back(e.id + ": " + plr_role(method) + " dims differ from hr");
        if (!plr.all_finite()) problems.push_back(e.id + ": " + plr_role(method) + " has non-finite values");
      }
    } catch (const Error& ex) {
      problems.push_back(ex.what());
    }
  }
  return problems;
}

}  // namespace ensr
