#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ensr/dictionary_sr.hpp"
#include "ensr/image.hpp"
#include "ensr/phantom.hpp"

namespace ensr {

struct CorpusConfig {
  PhantomConfig phantom;
  int n_train = 10;  ///< training pool, split into train/valid
  int n_test = 4;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  int dict_images = 4;  ///< held-out phantoms used to learn the SC/A+ dictionary
  DictionaryTrainingOptions dictionary;

  nlohmann::json to_json() const;
  std::uint64_t hash() const;
};

struct CorpusEntry {
  std::string id;
  std::string split;  ///< train, valid or test
  std::size_t height = 0;
  std::size_t width = 0;
  std::uint64_t seed = 0;
};

struct CorpusManifest {
  std::filesystem::path root;
  std::vector<CorpusEntry> entries;
  std::uint64_t config_hash = 0;
  nlohmann::json config;

  /// Entries of one split sorted by id.
  std::vector<CorpusEntry> split(const std::string& name) const;
  std::filesystem::path entry_dir(const CorpusEntry& e) const;
  std::filesystem::path dictionary_path() const;
};

/// File stem of an image role: hr, lr, plr_<method>.
std::string role_file(const std::string& role);
std::string plr_role(SRMethod m);

/// Number of training-pool images assigned to the train split.
int train_count(int n_pool, double train_fraction);

/// All five processed-LR images of `lr`, in SRMethod order.
std::vector<Image> process_lr(const Image& lr, const TrainedDictionary& dict);
Image process_lr(const Image& lr, SRMethod m, const TrainedDictionary& dict);

using ProgressFn = std::function<void(const std::string&)>;

/// Writes dictionary, images and finally manifest.json under root.
CorpusManifest build_corpus(const std::filesystem::path& root, const CorpusConfig& cfg, const ProgressFn& progress = {});

/// Throws DataError when the manifest is missing (partial corpus) or malformed.
CorpusManifest load_manifest(const std::filesystem::path& root);

/// Reads one image of an entry; `role` is hr, lr or plr_<method>.
Image load_role(const CorpusManifest& m, const CorpusEntry& e, const std::string& role);

/// Deterministic iteration order over n items: identity for seed 0, else a
/// seeded shuffle.
std::vector<std::size_t> iteration_order(std::size_t n, std::uint64_t seed);

/// Integrity check: every file present with the right dims and the stored LR
/// equal to downsample_kspace(HR) bit for bit. Returns problems found.
std::vector<std::string> verify_corpus(const CorpusManifest& m);

}  // namespace ensr
