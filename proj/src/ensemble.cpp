#include "ensr/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ensr/error.hpp"
#include "ensr/image_io.hpp"
#include "ensr/random.hpp"

namespace ensr {
using namespace nn;
using nlohmann::json;
namespace fs = std::filesystem;

void PredictionStack::validate() const {
  if (images.empty()) throw UsageError("prediction stack is empty");
  if (images.size() != methods.size())
    throw UsageError("prediction stack has " + std::to_string(images.size()) + " images for " +
                     std::to_string(methods.size()) + " methods");
  for (std::size_t i = 0; i < methods.size(); ++i)
    for (std::size_t j = i + 1; j < methods.size(); ++j)
      if (methods[i] == methods[j])
        throw UsageError("prediction stack lists method " + std::string(method_name(methods[i])) + " twice");
  for (const Image& img : images) require_same_dims(img, images[0], "prediction stack");
}

PredictionStack PredictionStack::subset(const std::vector<SRMethod>& keep) const {
  PredictionStack out;
  for (SRMethod m : keep) {
    const auto it = std::find(methods.begin(), methods.end(), m);
    if (it == methods.end())
      throw DataError("prediction stack has no " + std::string(method_name(m)) + " member");
    out.methods.push_back(m);
    out.images.push_back(images[static_cast<std::size_t>(it - methods.begin())]);
  }
  return out;
}

std::vector<const Image*> PredictionStack::pointers() const {
  std::vector<const Image*> out;
  for (const Image& img : images) out.push_back(&img);
  return out;
}

Image average_ensemble(const PredictionStack& stack) {
  stack.validate();
  Image out(stack.images[0].height(), stack.images[0].width(), stack.images[0].intensity_max());
  // Members are summed in method order so that the result does not depend
  // on how the stack was assembled.
  std::vector<std::size_t> order(stack.images.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return stack.methods[a] < stack.methods[b]; });
  const double n = static_cast<double>(order.size());
  for (std::size_t p = 0; p < out.size(); ++p) {
    double s = 0.0;
    for (std::size_t i : order) s += stack.images[i].values()[p];
    out.values()[p] = s / n;
  }
  return out;
}

std::uint64_t method_order_hash(const std::vector<SRMethod>& methods) {
  std::uint64_t h = fnv1a(nullptr, 0);
  for (SRMethod m : methods) {
    const std::string_view name = method_name(m);
    h = fnv1a(name.data(), name.size(), h);
    h = fnv1a(";", 1, h);
  }
  return h;
}

GeneratorSpec integrator_spec(std::size_t n_inputs, double width, bool allow_other) {
  if (!allow_other && n_inputs != 3 && n_inputs != 5)
    throw ConfigError("integrator takes 3 or 5 inputs, got " + std::to_string(n_inputs));
  if (n_inputs == 0) throw ConfigError("integrator needs at least one input");
  GeneratorSpec s;
  s.in_channels = n_inputs;
  s.width = width;
  return s;
}

namespace {

json methods_json(const std::vector<SRMethod>& methods) {
  json a = json::array();
  for (SRMethod m : methods) a.push_back(std::string(method_name(m)));
  return a;
}

}  // namespace

void IntegratorModel::save(const fs::path& dir, json meta) const {
  meta["kind"] = "integrator";
  meta["spec"] = generator_spec_to_json(spec);
  meta["layers"] = layers_to_json(spec.layers());
  meta["methods"] = methods_json(methods);
  meta["order_hash"] = method_order_hash(methods);
  params.save(dir, meta);
}

IntegratorModel IntegratorModel::load(const fs::path& dir) {
  json meta;
  IntegratorModel m;
  m.params = ParamStore::load(dir, &meta);
  if (meta.value("kind", "") != "integrator") throw ConfigError(dir.string() + " is not an integrator checkpoint");
  m.spec = generator_spec_from_json(meta.at("spec"));
  for (const auto& name : meta.at("methods")) m.methods.push_back(parse_method(name.get<std::string>()));
  if (meta.at("order_hash").get<std::uint64_t>() != method_order_hash(m.methods))
    throw ConfigError("integrator checkpoint " + dir.string() + " has an inconsistent channel-order hash");
  if (m.methods.size() != m.spec.in_channels)
    throw ConfigError("integrator checkpoint lists " + std::to_string(m.methods.size()) + " methods for " +
                      std::to_string(m.spec.in_channels) + " input channels");
  return m;
}

IntegratorResult train_integrator(const PairedPatches& data, const IntegratorConfig& cfg,
                                  const std::function<void(const IntegratorRecord&)>& on_epoch) {
  if (data.count() == 0) throw DataError("train_integrator: empty dataset");
  if (cfg.batch == 0 || cfg.epochs < 1) throw ConfigError("train_integrator: batch and epochs must be positive");
  IntegratorResult result;
  IntegratorModel& model = result.model;
  model.methods = cfg.methods;
  model.spec = integrator_spec(cfg.methods.size(), cfg.width, true);
  model.spec.residual = cfg.residual;
  if (data.channels() != model.spec.in_channels)
    throw DimensionError("train_integrator: data has " + std::to_string(data.channels()) + " channels for " +
                         std::to_string(model.spec.in_channels) + " methods");
  model.params = init_generator(model.spec, derive_seed(cfg.seed, 11));
  const AdamConfig adam{cfg.lr, cfg.beta1, cfg.beta2};

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const ParamStore last_good = model.params.clone();
    std::vector<std::size_t> order(data.count());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(cfg.seed, 200 + static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    double total = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      const PairedPatches batch =
          data.gather(std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                order.begin() + static_cast<std::ptrdiff_t>(end)));
      const Var out = generator_forward(model.spec, model.params, constant(batch.inputs));
      const Var loss = mean_absolute_error(out, constant(batch.targets));
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        if (!cfg.out_dir.empty()) {
          IntegratorModel good{model.spec, last_good, model.methods};
          good.save(cfg.out_dir / "last_good", cfg.meta);
        }
        throw NumericError("non-finite MAE in integrator training at epoch " + std::to_string(epoch));
      }
      model.params.adam_step(grad(loss, model.params.params()), adam);
      total += value * static_cast<double>(end - start);
      seen += end - start;
    }
    result.epochs.push_back({epoch, total / static_cast<double>(seen)});
    if (!cfg.out_dir.empty()) {
      json meta = cfg.meta;
      meta["epoch"] = epoch;
      meta["complete"] = epoch == cfg.epochs;
      meta["seed"] = cfg.seed;
      write_text_file(cfg.out_dir / "losses.csv", integrator_csv(result.epochs));
      model.save(cfg.out_dir / "model", meta);
    }
    if (on_epoch) on_epoch(result.epochs.back());
  }
  return result;
}

std::string integrator_csv(const std::vector<IntegratorRecord>& rows) {
  std::ostringstream os;
  os << "epoch,L_mae\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.17g\n", r.epoch, r.train_mae);
    os << buf;
  }
  return os.str();
}

Image integrate(const IntegratorModel& model, const PredictionStack& stack) {
  stack.validate();
  if (method_order_hash(stack.methods) != method_order_hash(model.methods)) {
    std::string want, got;
    for (SRMethod m : model.methods) want += std::string(want.empty() ? "" : ",") + std::string(method_name(m));
    for (SRMethod m : stack.methods) got += std::string(got.empty() ? "" : ",") + std::string(method_name(m));
    throw ConfigError("channel order mismatch: model expects [" + want + "], stack has [" + got + "]");
  }
  return predict_image(model.spec, model.params, stack.pointers(), stack.images[0].intensity_max());
}

}  // namespace ensr
