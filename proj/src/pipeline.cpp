#include "ensr/pipeline.hpp"

#include <algorithm>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <thread>

#include "ensr/error.hpp"
#include "ensr/image_io.hpp"
#include "ensr/nn/param_store.hpp"
#include "ensr/random.hpp"

namespace ensr {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<SRMethod> kThreeInputs = {SRMethod::Zip, SRMethod::Bicubic, SRMethod::Nedi};
const std::vector<SRMethod> kFiveInputs(kAllMethods.begin(), kAllMethods.end());
const char* const kSplits[] = {"train", "valid", "test"};

void say(const LogFn& log, const std::string& s) {
  if (log) log(s);
}

std::optional<json> read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) return std::nullopt;
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

// Rethrows the active exception with the stage name prefixed, keeping its class.
[[noreturn]] void rethrow_in_stage(const std::string& stage) {
  const std::string p = "stage " + stage + ": ";
  try {
    throw;
  } catch (const ConfigError& e) {
    throw ConfigError(p + e.what());
  } catch (const DataError& e) {
    throw DataError(p + e.what());
  } catch (const DimensionError& e) {
    throw DimensionError(p + e.what());
  } catch (const NumericError& e) {
    throw NumericError(p + e.what());
  } catch (const UsageError& e) {
    throw UsageError(p + e.what());
  } catch (const Error& e) {
    throw Error(p + e.what());
  } catch (const std::exception& e) {
    throw Error(p + e.what());
  }
}

template <class F>
auto run_stage(const std::string& name, const LogFn& log, F&& f) {
  say(log, "[" + name + "]");
  try {
    return f();
  } catch (...) {
    rethrow_in_stage(name);
  }
}

bool complete_checkpoint(const fs::path& dir, std::uint64_t run_hash) {
  if (!nn::checkpoint_exists(dir)) return false;
  const auto j = read_json(dir / "checkpoint.json");
  if (!j || !j->contains("meta")) return false;
  const json& m = j->at("meta");
  return m.value("complete", false) && m.value("run_hash", std::uint64_t{0}) == run_hash;
}

std::uint64_t generator_hash(const RunPaths& paths, SRMethod m) {
  return nn::ParamStore::load(paths.gan(m) / "generator").hash();
}

std::string methods_label(const std::vector<SRMethod>& ms) {
  std::string s;
  for (SRMethod m : ms) s += (s.empty() ? "" : ",") + std::string(method_name(m));
  return s;
}

}  // namespace

CorpusConfig corpus_config(const RunConfig& cfg) {
  CorpusConfig c = cfg.corpus;
  c.seed = cfg.seed;
  c.dictionary.seed = derive_seed(cfg.seed, 3);
  return c;
}

GanConfig gan_config(const RunConfig& cfg, SRMethod m) {
  GanConfig g;
  g.generator.in_channels = 1;
  g.generator.width = cfg.gan_width;
  g.generator.residual = cfg.gan_residual;
  g.discriminator.width = cfg.gan_width;
  g.weights = cfg.weights;
  g.epochs = cfg.gan_epochs;
  g.batch = cfg.gan_batch;
  g.lr = cfg.gan_lr;
  g.beta1 = cfg.gan_beta1;
  g.beta2 = cfg.gan_beta2;
  g.n_critic = cfg.gan_n_critic;
  g.seed = derive_seed(cfg.seed, 20 + static_cast<std::uint64_t>(m));
  g.extractor = cfg.extractor;
  g.extractor_seed = cfg.extractor_seed;
  g.meta["method"] = std::string(method_name(m));
  g.meta["run_hash"] = cfg.hash();
  return g;
}

IntegratorConfig integrator_config(const RunConfig& cfg, const std::vector<SRMethod>& methods, std::uint64_t seed) {
  IntegratorConfig c;
  c.methods = methods;
  c.width = cfg.ens_width;
  c.residual = cfg.ens_residual;
  c.epochs = cfg.ens_epochs;
  c.batch = cfg.ens_batch;
  c.lr = cfg.ens_lr;
  c.seed = seed;
  c.meta["run_hash"] = cfg.hash();
  return c;
}

PairedPatches gan_training_data(const CorpusManifest& corpus, SRMethod m, const std::string& split,
                                std::size_t patch, std::size_t stride) {
  PairedPatches out;
  for (const CorpusEntry& e : corpus.split(split)) {
    const Image hr = load_role(corpus, e, "hr");
    const Image plr = load_role(corpus, e, plr_role(m));
    append_patches(out, {&plr}, hr, patch, stride);
  }
  if (out.count() == 0) throw DataError("no " + split + " patches for " + std::string(method_name(m)));
  return out;
}

PredictionStack load_stack(const RunPaths& paths, const std::string& split, const std::string& id,
                           const std::vector<SRMethod>& methods) {
  PredictionStack s;
  for (SRMethod m : methods) {
    const fs::path p = paths.prediction(split, id, std::string(method_name(m)));
    if (!fs::exists(p)) throw DataError("missing GAN prediction " + p.string());
    s.methods.push_back(m);
    s.images.push_back(read_raw(p));
  }
  s.validate();
  return s;
}

PairedPatches integrator_training_data(const CorpusManifest& corpus, const RunPaths& paths,
                                       const std::vector<SRMethod>& methods, const std::string& split,
                                       std::size_t patch, std::size_t stride) {
  PairedPatches out;
  for (const CorpusEntry& e : corpus.split(split)) {
    const Image hr = load_role(corpus, e, "hr");
    const PredictionStack s = load_stack(paths, split, e.id, methods);
    append_patches(out, s.pointers(), hr, patch, stride);
  }
  if (out.count() == 0) throw DataError("no " + split + " patches for the integrator");
  return out;
}

int gan_parallelism(int requested, int jobs) {
  int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  n = std::clamp(n, 1, 5);
  return std::max(1, std::min(n, jobs));
}

CorpusManifest stage_corpus(const RunConfig& cfg, const RunPaths& paths, const LogFn& log) {
  const CorpusConfig cc = corpus_config(cfg);
  if (fs::exists(paths.corpus() / "manifest.json")) {
    CorpusManifest m = load_manifest(paths.corpus());
    if (m.config_hash != cc.hash())
      throw ConfigError("existing corpus in " + paths.corpus().string() + " was built with another config");
    say(log, "corpus present, " + std::to_string(m.entries.size()) + " images");
    return m;
  }
  return build_corpus(paths.corpus(), cc, log);
}

void stage_train_gans(const RunConfig& cfg, const CorpusManifest& corpus, const RunPaths& paths, const LogFn& log) {
  const std::uint64_t run_hash = cfg.hash();
  std::vector<SRMethod> todo;
  for (SRMethod m : kAllMethods) {
    if (complete_checkpoint(paths.gan(m) / "generator", run_hash))
      say(log, "gan " + std::string(method_name(m)) + ": checkpoint complete, skipped");
    else
      todo.push_back(m);
  }
  if (todo.empty()) return;

  std::mutex log_mu;
  const auto locked_log = [&](const std::string& s) {
    std::lock_guard lock(log_mu);
    say(log, s);
  };
  const auto train_one = [&](SRMethod m) {
    const std::string name(method_name(m));
    const PairedPatches data = gan_training_data(corpus, m, "train", cfg.patch_size, cfg.patch_stride);
    GanConfig g = gan_config(cfg, m);
    g.out_dir = paths.gan(m);
    fs::create_directories(g.out_dir);
    locked_log("gan " + name + ": " + std::to_string(data.count()) + " patches, " + std::to_string(g.epochs) +
               " epochs");
    train_gan(data, g, [&](const LossRecord& r) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "gan %s epoch %d: L_mse %.5g L_adv %.4g L_D %.4g", name.c_str(), r.epoch,
                    r.mse, r.adv, r.d);
      locked_log(buf);
    });
  };

  const int workers = gan_parallelism(cfg.gan_jobs, static_cast<int>(todo.size()));
  if (workers == 1) {
    for (SRMethod m : todo) train_one(m);
    return;
  }
  std::vector<std::exception_ptr> errors(todo.size());
  std::mutex next_mu;
  std::size_t next = 0;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i;
        {
          std::lock_guard lock(next_mu);
          if (next == todo.size()) return;
          i = next++;
        }
        try {
          train_one(todo[i]);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void stage_predict(const RunConfig& cfg, const CorpusManifest& corpus, const RunPaths& paths, const LogFn& log) {
  (void)cfg;
  json gens = json::object();
  for (SRMethod m : kAllMethods) gens[std::string(method_name(m))] = generator_hash(paths, m);
  const fs::path prov = paths.predictions() / "provenance.json";
  if (const auto j = read_json(prov);
      j && j->value("corpus_hash", std::uint64_t{0}) == corpus.config_hash && j->value("generators", json()) == gens) {
    say(log, "predictions up to date, skipped");
    return;
  }
  fs::remove(prov);
  for (SRMethod m : kAllMethods) {
    json meta;
    const nn::ParamStore g = nn::ParamStore::load(paths.gan(m) / "generator", &meta);
    const nn::GeneratorSpec spec = generator_spec_from_json(meta.at("spec"));
    for (const char* split : kSplits)
      for (const CorpusEntry& e : corpus.split(split)) {
        const Image plr = load_role(corpus, e, plr_role(m));
        const Image sr = predict_image(spec, g, {&plr}, 1.0);
        const fs::path out = paths.prediction(split, e.id, std::string(method_name(m)));
        fs::create_directories(out.parent_path());
        write_raw(out, sr);
      }
    say(log, "predicted " + std::string(method_name(m)));
  }
  json j;
  j["corpus_hash"] = corpus.config_hash;
  j["generators"] = gens;
  write_text_file(prov, j.dump(2) + "\n");
}

IntegratorModel stage_train_integrator(const RunConfig& cfg, const CorpusManifest& corpus, const RunPaths& paths,
                                       const std::string& name, const std::vector<SRMethod>& methods,
                                       const LogFn& log) {
  const fs::path dir = paths.ensemble(name);
  if (complete_checkpoint(dir / "model", cfg.hash())) {
    say(log, "integrator " + name + ": checkpoint complete, skipped");
    return IntegratorModel::load(dir / "model");
  }
  const PairedPatches data =
      integrator_training_data(corpus, paths, methods, "train", cfg.patch_size, cfg.patch_stride);
  IntegratorConfig ic = integrator_config(cfg, methods, derive_seed(cfg.seed, 30 + methods.size()));
  ic.out_dir = dir;
  fs::create_directories(dir);
  say(log, "integrator " + name + " (" + methods_label(methods) + "): " + std::to_string(data.count()) + " patches");
  IntegratorResult r = train_integrator(data, ic, [&](const IntegratorRecord& rec) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "integrator %s epoch %d: MAE %.5g", name.c_str(), rec.epoch, rec.train_mae);
    say(log, buf);
  });
  return std::move(r.model);
}

std::vector<std::string> report_variants(bool ablation) {
  std::vector<std::string> v;
  for (SRMethod m : kAllMethods) v.emplace_back(method_name(m));
  v.emplace_back("avg5");
  v.emplace_back("cnn5");
  if (ablation) {
    v.emplace_back("avg3");
    v.emplace_back("cnn3");
  }
  return v;
}

void stage_predict_ensembles(const RunConfig& cfg, const CorpusManifest& corpus, const RunPaths& paths,
                             bool ablation, const LogFn& log) {
  struct Variant {
    std::string name;
    std::vector<SRMethod> methods;
  };
  std::vector<Variant> sets = {{"5", kFiveInputs}};
  if (ablation) sets.push_back({"3", kThreeInputs});
  for (const Variant& v : sets) {
    const IntegratorModel model = stage_train_integrator(cfg, corpus, paths, "cnn" + v.name, v.methods, log);
    for (const CorpusEntry& e : corpus.split("test")) {
      const PredictionStack stack = load_stack(paths, "test", e.id, v.methods);
      write_raw(paths.prediction("test", e.id, "avg" + v.name), average_ensemble(stack));
      write_raw(paths.prediction("test", e.id, "cnn" + v.name), integrate(model, stack));
    }
    say(log, "ensembles avg" + v.name + "/cnn" + v.name + " predicted");
  }
}

CorpusSummary evaluate_variant(const CorpusManifest& corpus, const RunPaths& paths, const std::string& split,
                               const std::string& variant, const SsimOptions& opts) {
  std::vector<EvalPair> pairs;
  for (const CorpusEntry& e : corpus.split(split)) {
    const fs::path p = paths.prediction(split, e.id, variant);
    if (!fs::exists(p)) throw DataError("missing prediction " + p.string());
    pairs.push_back({e.id, read_raw(p), load_role(corpus, e, "hr")});
  }
  return evaluate_pairs(pairs, opts);
}

void stage_report(const RunConfig& cfg, const CorpusManifest& corpus, const RunPaths& paths, bool ablation,
                  const LogFn& log) {
  const fs::path dir = paths.report();
  fs::create_directories(dir / "losses");
  std::string summary = "variant,psnr_mean,psnr_std,ssim_mean,ssim_std\n";
  std::map<std::string, CorpusSummary> results;
  for (const std::string& v : report_variants(ablation)) {
    const CorpusSummary s = evaluate_variant(corpus, paths, "test", v, cfg.ssim);
    write_text_file(dir / ("metrics_" + v + ".csv"), metrics_csv(s));
    write_text_file(dir / ("accuracy_" + v + "_pooled.csv"), accuracy_csv(s.pooled));
    write_text_file(dir / ("accuracy_" + v + "_per_image.csv"), accuracy_csv(s.per_image));
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s,%.10g,%.10g,%.10g,%.10g\n", v.c_str(), s.psnr.mean, s.psnr.std, s.ssim.mean,
                  s.ssim.std);
    summary += buf;
    std::snprintf(buf, sizeof buf, "%-6s PSNR %.3f +- %.3f  SSIM %.4f +- %.4f", v.c_str(), s.psnr.mean, s.psnr.std,
                  s.ssim.mean, s.ssim.std);
    say(log, buf);
    results.emplace(v, s);
  }
  write_text_file(dir / "summary.csv", summary);
  if (ablation) {
    std::string a = "inputs,mode,psnr_mean,psnr_std,ssim_mean,ssim_std\n";
    for (const char* n : {"3", "5"})
      for (const char* mode : {"avg", "cnn"}) {
        const CorpusSummary& s = results.at(std::string(mode) + n);
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s,%s,%.10g,%.10g,%.10g,%.10g\n", n, mode, s.psnr.mean, s.psnr.std,
                      s.ssim.mean, s.ssim.std);
        a += buf;
      }
    write_text_file(dir / "ablation.csv", a);
  }
  for (SRMethod m : kAllMethods) {
    const fs::path src = paths.gan(m) / "losses.csv";
    if (fs::exists(src))
      fs::copy_file(src, dir / "losses" / ("gan_" + std::string(method_name(m)) + ".csv"),
                    fs::copy_options::overwrite_existing);
  }
  for (const char* e : {"cnn5", "cnn3"}) {
    const fs::path src = paths.ensemble(e) / "losses.csv";
    if (fs::exists(src))
      fs::copy_file(src, dir / "losses" / ("ensemble_" + std::string(e) + ".csv"),
                    fs::copy_options::overwrite_existing);
  }
}

void run_pipeline(const RunConfig& cfg, const fs::path& root, const PipelineOptions& opts) {
  cfg.validate();
  const RunPaths paths{root};
  fs::create_directories(root);
  const fs::path stamp = root / "run.json";
  if (const auto j = read_json(stamp)) {
    if (j->value("config_hash", std::uint64_t{0}) != cfg.hash())
      throw ConfigError("output root " + root.string() + " holds a run with a different config; use a new root");
  } else {
    json s;
    s["config_hash"] = cfg.hash();
    write_text_file(stamp, s.dump(2) + "\n");
  }
  write_text_file(root / "config.txt", cfg.echo());

  const LogFn& log = opts.log;
  const CorpusManifest corpus = run_stage("make-corpus", log, [&] { return stage_corpus(cfg, paths, log); });
  run_stage("train-gan", log, [&] { stage_train_gans(cfg, corpus, paths, log); });
  run_stage("predict", log, [&] { stage_predict(cfg, corpus, paths, log); });
  run_stage("train-ensemble", log, [&] { stage_predict_ensembles(cfg, corpus, paths, opts.ablation, log); });
  run_stage("evaluate", log, [&] { stage_report(cfg, corpus, paths, opts.ablation, log); });
}

}  // namespace ensr
