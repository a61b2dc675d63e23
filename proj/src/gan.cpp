#include "ensr/gan.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "ensr/error.hpp"
#include "ensr/image_io.hpp"
#include "ensr/random.hpp"

namespace ensr {
using namespace nn;
using nlohmann::json;
namespace fs = std::filesystem;

PairedPatches PairedPatches::gather(const std::vector<std::size_t>& idx) const {
  const std::size_t c = inputs.dim(1), p = inputs.dim(2), q = inputs.dim(3);
  PairedPatches out{Tensor({idx.size(), c, p, q}), Tensor({idx.size(), 1, p, q})};
  const std::size_t in_stride = c * p * q, tg_stride = p * q;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    std::copy_n(inputs.data.begin() + static_cast<std::ptrdiff_t>(idx[k] * in_stride), in_stride,
                out.inputs.data.begin() + static_cast<std::ptrdiff_t>(k * in_stride));
    std::copy_n(targets.data.begin() + static_cast<std::ptrdiff_t>(idx[k] * tg_stride), tg_stride,
                out.targets.data.begin() + static_cast<std::ptrdiff_t>(k * tg_stride));
  }
  return out;
}

void append_patches(PairedPatches& out, const std::vector<const Image*>& channels, const Image& target,
                    std::size_t patch_size, std::size_t stride) {
  if (channels.empty()) throw UsageError("append_patches: no input channels");
  for (const Image* img : channels) require_same_dims(*img, target, "append_patches");
  const PatchGrid tg = patchify(target, patch_size, stride);
  std::vector<PatchGrid> grids;
  for (const Image* img : channels) grids.push_back(patchify(*img, patch_size, stride));
  const std::size_t c = channels.size(), n_new = tg.patches.size();
  const std::size_t n_old = out.count();
  if (n_old > 0 && (out.inputs.dim(1) != c || out.inputs.dim(2) != patch_size))
    throw DimensionError("append_patches: patch layout differs from existing samples");
  out.inputs.shape = {n_old + n_new, c, patch_size, patch_size};
  out.targets.shape = {n_old + n_new, 1, patch_size, patch_size};
  for (std::size_t k = 0; k < n_new; ++k) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const auto& v = grids[ch].patches[k].values();
      out.inputs.data.insert(out.inputs.data.end(), v.begin(), v.end());
    }
    const auto& t = tg.patches[k].values();
    out.targets.data.insert(out.targets.data.end(), t.begin(), t.end());
  }
}

Tensor images_to_tensor(const std::vector<const Image*>& channels) {
  if (channels.empty()) throw UsageError("images_to_tensor: no channels");
  const std::size_t h = channels[0]->height(), w = channels[0]->width();
  Tensor t({1, channels.size(), h, w});
  for (std::size_t c = 0; c < channels.size(); ++c) {
    require_same_dims(*channels[c], *channels[0], "images_to_tensor");
    std::copy(channels[c]->values().begin(), channels[c]->values().end(),
              t.data.begin() + static_cast<std::ptrdiff_t>(c * h * w));
  }
  return t;
}

Image tensor_to_image(const Tensor& t, std::size_t sample, double intensity_max) {
  if (t.rank() != 4 || t.dim(1) != 1) throw DimensionError("tensor_to_image: expected (N, 1, H, W)");
  const std::size_t h = t.dim(2), w = t.dim(3);
  std::vector<double> v(t.data.begin() + static_cast<std::ptrdiff_t>(sample * h * w),
                        t.data.begin() + static_cast<std::ptrdiff_t>((sample + 1) * h * w));
  return Image(h, w, std::move(v), intensity_max);
}

Var adv_loss(const Var& d_fake) { return scale(mean_all(d_fake), -1.0); }

Var gradient_loss(const Var& fake, const Var& real) {
  return add(mean_squared_error(diff_x(fake), diff_x(real)), mean_squared_error(diff_y(fake), diff_y(real)));
}

Var perceptual_loss(const Var& fake, const Var& real, const FeatureExtractor& phi) {
  return mean_squared_error(phi.features(fake), phi.features(real));
}

Var gradient_penalty(const Critic& critic, const Tensor& real, const Tensor& fake, std::uint64_t seed) {
  if (real.shape != fake.shape) throw DimensionError("gradient_penalty: real/fake batch shapes differ");
  const std::size_t n = real.dim(0), per = real.size() / n;
  Rng rng(seed);
  Tensor mix(real.shape);
  for (std::size_t i = 0; i < n; ++i) {
    const double eps = rng.uniform();
    for (std::size_t j = 0; j < per; ++j) {
      const std::size_t k = i * per + j;
      mix.data[k] = eps * real.data[k] + (1.0 - eps) * fake.data[k];
    }
  }
  const Var x_hat = leaf(std::move(mix));
  const Var g = grad(sum_all(critic(x_hat)), {x_hat}, true)[0];
  const Var norm = pow_scalar(add_scalar(sum_sample(mul(g, g)), 1e-12), 0.5);
  const Var dev = add_scalar(norm, -1.0);
  return mean_all(mul(dev, dev));
}

GeneratorLoss generator_objective(const Var& fake, const Var& real, const Var& d_fake,
                                  const FeatureExtractor& phi, const LossWeights& w) {
  GeneratorLoss l;
  l.adv = adv_loss(d_fake);
  l.gra = gradient_loss(fake, real);
  l.mse = mean_squared_error(fake, real);
  l.per = perceptual_loss(fake, real, phi);
  l.total = add(add(l.adv, scale(l.gra, w.gradient)), add(scale(l.mse, w.mse), scale(l.per, w.perceptual)));
  return l;
}

std::string loss_csv(const std::vector<LossRecord>& rows) {
  std::ostringstream os;
  os << "epoch,g_steps,L_adv,L_gra,L_mse,L_per,L_D\n";
  char buf[256];
  for (const LossRecord& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%ld,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.g_steps, r.adv, r.gra,
                  r.mse, r.per, r.d);
    os << buf;
  }
  return os.str();
}

json generator_spec_to_json(const GeneratorSpec& spec) {
  return {{"in_channels", spec.in_channels}, {"width", spec.width}, {"kernel", spec.kernel}, {"residual", spec.residual}};
}

GeneratorSpec generator_spec_from_json(const json& j) {
  GeneratorSpec s;
  s.in_channels = j.at("in_channels").get<std::size_t>();
  s.width = j.at("width").get<double>();
  s.kernel = j.at("kernel").get<std::size_t>();
  s.residual = j.value("residual", false);
  return s;
}

namespace {

struct Accum {
  double adv = 0, gra = 0, mse = 0, per = 0, d = 0;
  long g = 0, dn = 0;
};

void require_finite(double v, const char* what, int epoch, long step, const std::function<void()>& save_last_good) {
  if (std::isfinite(v)) return;
  save_last_good();
  throw NumericError(std::string("non-finite ") + what + " at epoch " + std::to_string(epoch) + ", generator step " +
                     std::to_string(step));
}

class GanTrainer {
 public:
  GanTrainer(const PairedPatches& data, const GanConfig& cfg)
      : data_(data),
        cfg_(cfg),
        g_(init_generator(cfg.generator, derive_seed(cfg.seed, 1))),
        d_(init_discriminator(cfg.discriminator, derive_seed(cfg.seed, 2))),
        phi_(make_extractor(cfg.extractor, cfg.extractor_seed)),
        adam_{cfg.lr, cfg.beta1, cfg.beta2} {
    if (data.count() == 0) throw DataError("train_gan: empty dataset");
    if (data.channels() != cfg.generator.in_channels)
      throw DimensionError("train_gan: data has " + std::to_string(data.channels()) + " channels, generator expects " +
                           std::to_string(cfg.generator.in_channels));
    if (cfg.batch == 0 || cfg.n_critic < 1) throw ConfigError("train_gan: batch and n_critic must be positive");
    if (cfg.epochs < 1 && !cfg.single_batch) throw ConfigError("train_gan: epochs must be positive");
  }

  GanResult run(const EpochCallback& on_epoch) {
    GanResult result;
    if (cfg_.single_batch) {
      run_single_batch(result);
    } else {
      for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
        run_epoch(epoch, result);
        checkpoint(epoch, result);
        if (on_epoch) on_epoch(result.epochs.back());
      }
    }
    result.generator = std::move(g_);
    result.discriminator = std::move(d_);
    return result;
  }

 private:
  Var critic(const ParamStore& ps, const Var& x) const { return discriminator_forward(cfg_.discriminator, ps, x); }

  double critic_step(const Tensor& real, const Tensor& fake) {
    const std::uint64_t gp_seed = derive_seed(cfg_.seed, 1000000 + static_cast<std::uint64_t>(critic_steps_++));
    const Var d_real = critic(d_, constant(real));
    const Var d_fake = critic(d_, constant(fake));
    const Var pen = gradient_penalty([this](const Var& x) { return critic(d_, x); }, real, fake, gp_seed);
    const Var loss = add(sub(mean_all(d_fake), mean_all(d_real)), scale(pen, cfg_.weights.gp_coef));
    const double value = loss.value()[0];
    require_finite(value, "L_D", epoch_, g_steps_, [this] { save_last_good(); });
    d_.adam_step(grad(loss, d_.params()), adam_);
    return value;
  }

  GeneratorLoss generator_step(const Var& fake, const Tensor& real) {
    const ParamStore frozen_d = d_.frozen();
    const Var real_v = constant(real);
    GeneratorLoss l = generator_objective(fake, real_v, critic(frozen_d, fake), *phi_, cfg_.weights);
    require_finite(l.total.value()[0], "L_G", epoch_, g_steps_, [this] { save_last_good(); });
    g_.adam_step(grad(l.total, g_.params()), adam_);
    ++g_steps_;
    return l;
  }

  Tensor fake_no_grad(const Tensor& inputs) const {
    NoGrad ng;
    return generator_forward(cfg_.generator, g_, constant(inputs)).value();
  }

  static void add_g(Accum& a, const GeneratorLoss& l) {
    a.adv += l.adv.value()[0];
    a.gra += l.gra.value()[0];
    a.mse += l.mse.value()[0];
    a.per += l.per.value()[0];
    ++a.g;
  }

  LossRecord finish(int epoch, const Accum& a, const PairedPatches& probe) {
    LossRecord r;
    r.epoch = epoch;
    r.g_steps = g_steps_;
    r.d = a.dn ? a.d / static_cast<double>(a.dn) : 0.0;
    if (a.g > 0) {
      const double n = static_cast<double>(a.g);
      r.adv = a.adv / n;
      r.gra = a.gra / n;
      r.mse = a.mse / n;
      r.per = a.per / n;
    } else {
      // No generator update this epoch: report the current losses instead.
      NoGrad ng;
      const Var fake = constant(fake_no_grad(probe.inputs));
      const GeneratorLoss l = generator_objective(fake, constant(probe.targets), critic(d_, fake), *phi_, cfg_.weights);
      r.adv = l.adv.value()[0];
      r.gra = l.gra.value()[0];
      r.mse = l.mse.value()[0];
      r.per = l.per.value()[0];
    }
    return r;
  }

  void run_single_batch(GanResult& result) {
    if (cfg_.max_g_steps < 1) throw ConfigError("single-batch training needs max_g_steps >= 1");
    std::vector<std::size_t> idx(std::min(cfg_.batch, data_.count()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const PairedPatches batch = data_.gather(idx);
    epoch_ = 1;
    snapshot();
    Accum acc;
    for (int s = 0; s < cfg_.max_g_steps; ++s) {
      // The generator is fixed during the critic steps, so its output on the
      // fixed batch is computed once.
      const Tensor fake = fake_no_grad(batch.inputs);
      for (int c = 0; c < cfg_.n_critic; ++c) {
        acc.d += critic_step(batch.targets, fake);
        ++acc.dn;
      }
      const GeneratorLoss l = generator_step(generator_forward(cfg_.generator, g_, constant(batch.inputs)), batch.targets);
      result.step_mse.push_back(l.mse.value()[0]);
      add_g(acc, l);
    }
    result.epochs.push_back(finish(1, acc, batch));
    checkpoint(1, result);
  }

  void run_epoch(int epoch, GanResult& result) {
    epoch_ = epoch;
    snapshot();
    std::vector<std::size_t> order(data_.count());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(cfg_.seed, 100 + static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    Accum acc;
    PairedPatches first;
    for (std::size_t start = 0; start < order.size(); start += cfg_.batch) {
      const std::size_t end = std::min(order.size(), start + cfg_.batch);
      const PairedPatches batch =
          data_.gather(std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                order.begin() + static_cast<std::ptrdiff_t>(end)));
      if (start == 0) first = batch;
      const bool g_now = (critic_steps_ + 1) % static_cast<long>(cfg_.n_critic) == 0;
      if (g_now) {
        // Generator output with its graph; the critic sees a detached copy.
        const Var fake = generator_forward(cfg_.generator, g_, constant(batch.inputs));
        acc.d += critic_step(batch.targets, fake.value());
        ++acc.dn;
        const GeneratorLoss l = generator_step(fake, batch.targets);
        result.step_mse.push_back(l.mse.value()[0]);
        add_g(acc, l);
      } else {
        acc.d += critic_step(batch.targets, fake_no_grad(batch.inputs));
        ++acc.dn;
      }
    }
    result.epochs.push_back(finish(epoch, acc, first));
  }

  void snapshot() {
    last_good_g_ = g_.clone();
    last_good_d_ = d_.clone();
  }

  json meta(const char* kind, int epoch) const {
    json m = cfg_.meta;
    m["kind"] = kind;
    m["epoch"] = epoch;
    m["complete"] = cfg_.single_batch || epoch == cfg_.epochs;
    m["seed"] = cfg_.seed;
    return m;
  }

  void checkpoint(int epoch, const GanResult& result) const {
    if (cfg_.out_dir.empty()) return;
    json gm = meta("generator", epoch);
    gm["spec"] = generator_spec_to_json(cfg_.generator);
    gm["layers"] = layers_to_json(cfg_.generator.layers());
    json dm = meta("discriminator", epoch);
    dm["width"] = cfg_.discriminator.width;
    dm["layers"] = layers_to_json(cfg_.discriminator.layers());
    write_text_file(cfg_.out_dir / "losses.csv", loss_csv(result.epochs));
    d_.save(cfg_.out_dir / "discriminator", dm);
    g_.save(cfg_.out_dir / "generator", gm);
  }

  void save_last_good() const {
    if (cfg_.out_dir.empty()) return;
    last_good_g_.save(cfg_.out_dir / "last_good" / "generator", meta("generator", epoch_ - 1));
    last_good_d_.save(cfg_.out_dir / "last_good" / "discriminator", meta("discriminator", epoch_ - 1));
  }

  const PairedPatches& data_;
  const GanConfig& cfg_;
  ParamStore g_;
  ParamStore d_;
  ParamStore last_good_g_;
  ParamStore last_good_d_;
  std::unique_ptr<FeatureExtractor> phi_;
  AdamConfig adam_;
  long critic_steps_ = 0;
  long g_steps_ = 0;
  int epoch_ = 0;
};

}  // namespace

GanResult train_gan(const PairedPatches& data, const GanConfig& cfg, const EpochCallback& on_epoch) {
  GanTrainer trainer(data, cfg);
  return trainer.run(on_epoch);
}

Image predict_image(const GeneratorSpec& spec, const ParamStore& params, const std::vector<const Image*>& channels,
                    double intensity_max) {
  NoGrad ng;
  const Var out = generator_forward(spec, params, constant(images_to_tensor(channels)));
  Image img = tensor_to_image(out.value(), 0, intensity_max);
  img.check_finite("prediction");
  return img;
}

}  // namespace ensr
