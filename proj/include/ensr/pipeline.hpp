#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ensr/config.hpp"
#include "ensr/corpus.hpp"
#include "ensr/ensemble.hpp"
#include "ensr/gan.hpp"
#include "ensr/metrics.hpp"

namespace ensr {

/// Directory layout of one run.
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path corpus() const { return root / "corpus"; }
  std::filesystem::path gan(SRMethod m) const { return root / "gan" / std::string(method_name(m)); }
  std::filesystem::path predictions() const { return root / "predictions"; }
  std::filesystem::path prediction(const std::string& split, const std::string& id, const std::string& variant) const {
    return predictions() / split / id / ("sr_" + variant + ".raw");
  }
  std::filesystem::path ensemble(const std::string& name) const { return root / "ensemble" / name; }
  std::filesystem::path report() const { return root / "report"; }
};

using LogFn = std::function<void(const std::string&)>;

/// Corpus config of a run (seeds derived from the run seed).
CorpusConfig corpus_config(const RunConfig& cfg);
GanConfig gan_config(const RunConfig& cfg, SRMethod m);
IntegratorConfig integrator_config(const RunConfig& cfg, const std::vector<SRMethod>& methods, std::uint64_t seed);

/// PLR -> HR patch pairs of one method over a split.
PairedPatches gan_training_data(const CorpusManifest& corpus, SRMethod m, const std::string& split,
                                std::size_t patch, std::size_t stride);
/// Stacked GAN predictions -> HR patch pairs over a split.
PairedPatches integrator_training_data(const CorpusManifest& corpus, const RunPaths& paths,
                                       const std::vector<SRMethod>& methods, const std::string& split,
                                       std::size_t patch, std::size_t stride);
PredictionStack load_stack(const RunPaths& paths, const std::string& split, const std::string& id,
                           const std::vector<SRMethod>& methods);

// Stages. Each one skips work whose outputs are already complete.
CorpusManifest stage_corpus(const RunConfig& cfg, const RunPaths& paths, const LogFn& log);
void stage_train_gans(const RunConfig& cfg, const CorpusManifest& corpus, const RunPaths& paths, const LogFn& log);
void stage_predict(const RunConfig& cfg, const CorpusManifest& corpus, const RunPaths& paths, const LogFn& log);
/// Trains one integrator under paths.ensemble(name) (unless complete).
IntegratorModel stage_train_integrator(const RunConfig& cfg, const CorpusManifest& corpus, const RunPaths& paths,
                                       const std::string& name, const std::vector<SRMethod>& methods,
                                       const LogFn& log);
void stage_predict_ensembles(const RunConfig& cfg, const CorpusManifest& corpus, const RunPaths& paths,
                             bool ablation, const LogFn& log);
void stage_report(const RunConfig& cfg, const CorpusManifest& corpus, const RunPaths& paths, bool ablation,
                  const LogFn& log);

struct PipelineOptions {
  bool ablation = false;
  LogFn log;
};

/// Corpus -> GANs -> predictions -> integrator(s) -> report. Failures are
/// rethrown with the stage name prefixed; partial artifacts are kept.
void run_pipeline(const RunConfig& cfg, const std::filesystem::path& root, const PipelineOptions& opts = {});

/// Variant names used for prediction files and report rows.
std::vector<std::string> report_variants(bool ablation);

/// Evaluates one prediction variant over a split.
CorpusSummary evaluate_variant(const CorpusManifest& corpus, const RunPaths& paths, const std::string& split,
                               const std::string& variant, const SsimOptions& opts);

/// Worker count for the GAN stage: min(requested or hardware, 5, jobs).
int gan_parallelism(int requested, int jobs);

}  // namespace ensr
