#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ensr/config.hpp"
#include "ensr/corpus.hpp"
#include "ensr/dictionary_sr.hpp"
#include "ensr/ensemble.hpp"
#include "ensr/error.hpp"
#include "ensr/gan.hpp"
#include "ensr/image_io.hpp"
#include "ensr/kspace.hpp"
#include "ensr/metrics.hpp"
#include "ensr/nn/param_store.hpp"
#include "ensr/pipeline.hpp"
#include "ensr/random.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ensr;

namespace {

enum Exit : int {
  kOk = 0,
  kUnexpected = 1,
  kUsage = 2,
  kConfig = 3,
  kData = 4,
  kDimension = 5,
  kNumeric = 6,
  kOther = 7,
};

struct Globals {
  std::string config_file;
  std::string preset = "paper";
  std::vector<std::string> sets;
};

RunConfig resolve(const Globals& g) {
  RunConfig base;
  if (g.preset == "desk")
    base = desk_config();
  else if (g.preset != "paper")
    throw ConfigError("unknown preset '" + g.preset + "' (expected paper or desk)");
  RunConfig cfg = g.config_file.empty() ? base : load_config(g.config_file, base);
  for (const std::string& kv : g.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

void log_line(const std::string& s) { std::cerr << s << "\n"; }

void write_image(const fs::path& p, const Image& img) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  if (p.extension() == ".pgm")
    write_pgm16(p, img);
  else
    write_raw(p, img);
}

const fs::path kAvgMarker = "ensemble.json";

std::vector<SRMethod> input_set(int n) {
  if (n == 5) return {kAllMethods.begin(), kAllMethods.end()};
  if (n == 3) return {SRMethod::Zip, SRMethod::Bicubic, SRMethod::Nedi};
  throw ConfigError("--inputs must be 3 or 5");
}

PredictionStack read_stack_dir(const fs::path& dir, const std::vector<SRMethod>& methods) {
  PredictionStack s;
  for (SRMethod m : methods) {
    const fs::path p = dir / ("sr_" + std::string(method_name(m)) + ".raw");
    if (!fs::exists(p)) throw DataError("stack member missing: " + p.string());
    s.methods.push_back(m);
    s.images.push_back(read_raw(p));
  }
  s.validate();
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ensemble MRI super-resolution (k-space degradation, classical SR, WGAN-GP, CNN integration)"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_file, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--preset", g.preset, "base configuration: paper or desk");
  app.add_option("--set", g.sets, "override one key (key=value), repeatable");
  app.fallthrough();

  // make-corpus
  auto* mk = app.add_subcommand("make-corpus", "generate phantoms, LR images and all processed-LR inputs");
  std::string mk_out;
  int mk_train = -1, mk_test = -1, mk_dims = -1;
  long long mk_seed = -1;
  mk->add_option("--out", mk_out, "corpus root")->required();
  mk->add_option("--n-train", mk_train);
  mk->add_option("--n-test", mk_test);
  mk->add_option("--dims", mk_dims);
  mk->add_option("--seed", mk_seed);

  // downsample
  auto* ds = app.add_subcommand("downsample", "k-space 2x downsampling");
  std::string ds_in, ds_out, ds_k;
  ds->add_option("--in", ds_in)->required()->check(CLI::ExistingFile);
  ds->add_option("--out", ds_out)->required();
  ds->add_option("--save-kspace", ds_k, "write the full-resolution k-space grid");

  // preprocess
  auto* pp = app.add_subcommand("preprocess", "classical 2x upscaling of one LR image");
  std::string pp_method, pp_in, pp_out, pp_dict;
  pp->add_option("--method", pp_method, "zip|bi|nedi|sc|aplus")->required();
  pp->add_option("--in", pp_in)->required()->check(CLI::ExistingFile);
  pp->add_option("--out", pp_out)->required();
  pp->add_option("--dict", pp_dict, "dictionary.json (sc and aplus)");

  // train-gan
  auto* tg = app.add_subcommand("train-gan", "train one WGAN-GP refiner on a corpus");
  std::string tg_method, tg_data, tg_out;
  int tg_epochs = -1;
  double tg_lr = -1;
  long long tg_batch = -1, tg_seed = -1;
  tg->add_option("--method", tg_method)->required();
  tg->add_option("--data", tg_data, "corpus root")->required();
  tg->add_option("--out", tg_out, "checkpoint directory")->required();
  tg->add_option("--epochs", tg_epochs);
  tg->add_option("--lr", tg_lr);
  tg->add_option("--batch", tg_batch);
  tg->add_option("--seed", tg_seed);

  // predict
  auto* pr = app.add_subcommand("predict", "apply a trained generator");
  std::string pr_ckpt, pr_in, pr_out, pr_data, pr_split = "test";
  pr->add_option("--ckpt", pr_ckpt, "train-gan output directory")->required();
  pr->add_option("--in", pr_in, "single processed-LR image");
  pr->add_option("--data", pr_data, "corpus root (predict a whole split)");
  pr->add_option("--split", pr_split);
  pr->add_option("--out", pr_out, "output image, or directory with --data")->required();

  // train-ensemble
  auto* te = app.add_subcommand("train-ensemble", "train the integration CNN (or record an averaging ensemble)");
  int te_inputs = 5;
  std::string te_mode = "cnn", te_data, te_out;
  te->add_option("--inputs", te_inputs, "3 or 5");
  te->add_option("--mode", te_mode, "cnn or avg");
  te->add_option("--data", te_data, "run root holding corpus/ and predictions/")->required();
  te->add_option("--out", te_out, "checkpoint directory")->required();

  // predict-ensemble
  auto* pe = app.add_subcommand("predict-ensemble", "combine a stack of GAN predictions");
  std::string pe_ckpt, pe_stack, pe_out;
  int pe_inputs = 0;
  pe->add_option("--ckpt", pe_ckpt)->required();
  pe->add_option("--stack", pe_stack, "directory with sr_<method>.raw files")->required();
  pe->add_option("--out", pe_out)->required();
  pe->add_option("--inputs", pe_inputs, "expected input count (checked against the checkpoint)");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "PSNR/SSIM of predictions against references");
  std::string ev_pred, ev_ref, ev_out, ev_pname, ev_rname;
  ev->add_option("--pred", ev_pred)->required();
  ev->add_option("--ref", ev_ref)->required();
  ev->add_option("--out", ev_out, "metrics CSV")->required();
  ev->add_option("--pred-name", ev_pname, "per-id prediction file name");
  ev->add_option("--ref-name", ev_rname, "per-id reference file name");

  // plot-accuracy
  auto* pa = app.add_subcommand("plot-accuracy", "pixel-intensity accuracy curve (threshold, accuracy)");
  std::string pa_pred, pa_ref, pa_out, pa_pname, pa_rname;
  bool pa_per_image = false;
  pa->add_option("--pred", pa_pred)->required();
  pa->add_option("--ref", pa_ref)->required();
  pa->add_option("--out", pa_out)->required();
  pa->add_option("--pred-name", pa_pname);
  pa->add_option("--ref-name", pa_rname);
  pa->add_flag("--per-image", pa_per_image, "average per-image curves instead of pooling pixels");

  // run-all
  auto* ra = app.add_subcommand("run-all", "full workflow with resume");
  std::string ra_out;
  bool ra_ablation = false;
  int ra_jobs = -1;
  ra->add_option("--out", ra_out, "run root")->required();
  ra->add_flag("--ablation", ra_ablation, "also produce the 3-input ensembles and the 2x2 grid");
  ra->add_option("--jobs", ra_jobs, "concurrent GAN trainings (0 = available parallelism, max 5)");

  auto* sc = app.add_subcommand("show-config", "print the resolved configuration and its deviations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    RunConfig cfg = resolve(g);

    if (*sc) {
      cfg.validate();
      std::cout << cfg.echo();
    } else if (*mk) {
      if (mk_train >= 0) cfg.corpus.n_train = mk_train;
      if (mk_test >= 0) cfg.corpus.n_test = mk_test;
      if (mk_dims >= 0) cfg.corpus.phantom.height = cfg.corpus.phantom.width = static_cast<std::size_t>(mk_dims);
      if (mk_seed >= 0) cfg.seed = static_cast<std::uint64_t>(mk_seed);
      cfg.corpus.phantom.validate();
      const CorpusManifest m = build_corpus(mk_out, corpus_config(cfg), log_line);
      std::cerr << "corpus: " << m.entries.size() << " images in " << mk_out << "\n";
    } else if (*ds) {
      const Image hr = read_image(ds_in);
      write_image(ds_out, downsample_kspace(hr));
      if (!ds_k.empty()) {
        const KSpaceGrid k = fft2(hr);
        write_raw_complex(ds_k, static_cast<std::uint32_t>(k.height), static_cast<std::uint32_t>(k.width), k.data);
      }
    } else if (*pp) {
      const SRMethod m = parse_method(pp_method);
      const Image lr = read_image(pp_in);
      TrainedDictionary dict;
      if (m == SRMethod::SparseCoding || m == SRMethod::APlus) {
        if (pp_dict.empty()) throw ConfigError("--method " + pp_method + " needs --dict");
        dict = load_dictionary(pp_dict);
      }
      write_image(pp_out, process_lr(lr, m, dict));
    } else if (*tg) {
      if (tg_epochs > 0) cfg.gan_epochs = tg_epochs;
      if (tg_lr > 0) cfg.gan_lr = tg_lr;
      if (tg_batch > 0) cfg.gan_batch = static_cast<std::size_t>(tg_batch);
      if (tg_seed >= 0) cfg.seed = static_cast<std::uint64_t>(tg_seed);
      cfg.validate();
      const SRMethod m = parse_method(tg_method);
      const CorpusManifest corpus = load_manifest(tg_data);
      const PairedPatches data = gan_training_data(corpus, m, "train", cfg.patch_size, cfg.patch_stride);
      GanConfig gc = gan_config(cfg, m);
      gc.out_dir = tg_out;
      fs::create_directories(gc.out_dir);
      write_text_file(gc.out_dir / "config.txt", cfg.echo());
      train_gan(data, gc, [](const LossRecord& r) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "epoch %d: L_adv %.4g L_gra %.4g L_mse %.4g L_per %.4g L_D %.4g", r.epoch,
                      r.adv, r.gra, r.mse, r.per, r.d);
        log_line(buf);
      });
    } else if (*pr) {
      json meta;
      const nn::ParamStore gp = nn::ParamStore::load(fs::path(pr_ckpt) / "generator", &meta);
      if (meta.value("kind", "") != "generator") throw ConfigError(pr_ckpt + " does not hold a generator checkpoint");
      const nn::GeneratorSpec spec = generator_spec_from_json(meta.at("spec"));
      if (pr_in.empty() == pr_data.empty()) throw UsageError("predict: give exactly one of --in or --data");
      if (!pr_in.empty()) {
        const Image plr = read_image(pr_in);
        write_image(pr_out, predict_image(spec, gp, {&plr}, plr.intensity_max()));
      } else {
        const SRMethod m = parse_method(meta.at("method").get<std::string>());
        const CorpusManifest corpus = load_manifest(pr_data);
        for (const CorpusEntry& e : corpus.split(pr_split)) {
          const Image plr = load_role(corpus, e, plr_role(m));
          write_image(fs::path(pr_out) / e.id / ("sr_" + std::string(method_name(m)) + ".raw"),
                      predict_image(spec, gp, {&plr}, 1.0));
        }
        json prov;
        prov["corpus_hash"] = corpus.config_hash;
        write_text_file(fs::path(pr_out) / "provenance.json", prov.dump(2) + "\n");
      }
    } else if (*te) {
      const std::vector<SRMethod> methods = input_set(te_inputs);
      fs::create_directories(te_out);
      if (te_mode == "avg") {
        json j;
        j["mode"] = "avg";
        for (SRMethod m : methods) j["methods"].push_back(std::string(method_name(m)));
        write_text_file(fs::path(te_out) / kAvgMarker, j.dump(2) + "\n");
      } else if (te_mode == "cnn") {
        cfg.validate();
        const RunPaths paths{te_data};
        const CorpusManifest corpus = load_manifest(paths.corpus());
        const PairedPatches data =
            integrator_training_data(corpus, paths, methods, "train", cfg.patch_size, cfg.patch_stride);
        IntegratorConfig ic = integrator_config(cfg, methods, derive_seed(cfg.seed, 30 + methods.size()));
        ic.out_dir = te_out;
        train_integrator(data, ic, [](const IntegratorRecord& r) {
          log_line("epoch " + std::to_string(r.epoch) + ": MAE " + std::to_string(r.train_mae));
        });
      } else {
        throw ConfigError("--mode must be cnn or avg");
      }
    } else if (*pe) {
      const fs::path ck = pe_ckpt;
      if (fs::exists(ck / kAvgMarker)) {
        std::ifstream in(ck / kAvgMarker);
        json j;
        in >> j;
        std::vector<SRMethod> methods;
        for (const auto& n : j.at("methods")) methods.push_back(parse_method(n.get<std::string>()));
        if (pe_inputs && static_cast<std::size_t>(pe_inputs) != methods.size())
          throw ConfigError("--inputs " + std::to_string(pe_inputs) + " conflicts with a " +
                            std::to_string(methods.size()) + "-input checkpoint");
        write_image(pe_out, average_ensemble(read_stack_dir(pe_stack, methods)));
      } else {
        const fs::path model_dir = nn::checkpoint_exists(ck / "model") ? ck / "model" : ck;
        const IntegratorModel model = IntegratorModel::load(model_dir);
        if (pe_inputs && static_cast<std::size_t>(pe_inputs) != model.methods.size())
          throw ConfigError("--inputs " + std::to_string(pe_inputs) + " conflicts with a " +
                            std::to_string(model.methods.size()) + "-input checkpoint");
        write_image(pe_out, integrate(model, read_stack_dir(pe_stack, model.methods)));
      }
    } else if (*ev || *pa) {
      const bool is_ev = ev->parsed();
      const CorpusSummary s = is_ev ? evaluate_corpus(ev_pred, ev_ref, ev_pname, ev_rname, cfg.ssim)
                                    : evaluate_corpus(pa_pred, pa_ref, pa_pname, pa_rname, cfg.ssim);
      for (const std::string& u : s.unmatched) log_line("warning: " + u);
      if (s.images.empty()) throw DataError("no prediction/reference pairs found");
      if (is_ev) {
        write_text_file(ev_out, metrics_csv(s));
        std::printf("PSNR %.4f +- %.4f  SSIM %.5f +- %.5f  (%zu images)\n", s.psnr.mean, s.psnr.std, s.ssim.mean,
                    s.ssim.std, s.images.size());
      } else {
        write_text_file(pa_out, accuracy_csv(pa_per_image ? s.per_image : s.pooled));
      }
    } else if (*ra) {
      if (ra_jobs >= 0) cfg.gan_jobs = ra_jobs;
      PipelineOptions opts;
      opts.ablation = ra_ablation;
      opts.log = log_line;
      run_pipeline(cfg, ra_out, opts);
    }
    return kOk;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const DimensionError& e) {
    std::cerr << "dimension error: " << e.what() << "\n";
    return kDimension;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOther;
  } catch (const std::exception& e) {
    std::cerr << "unexpected: " << e.what() << "\n";
    return kUnexpected;
  }
}
