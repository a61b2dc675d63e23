#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "ensr/ensemble.hpp"
#include "ensr/error.hpp"
#include "ensr/phantom.hpp"
#include "oracles.hpp"

using namespace ensr;
namespace fs = std::filesystem;

namespace {

const std::vector<SRMethod> kThree{SRMethod::Zip, SRMethod::Bicubic, SRMethod::Nedi};

PredictionStack random_stack(std::size_t h, std::size_t w, std::uint64_t seed) {
  PredictionStack s;
  for (SRMethod m : kAllMethods) {
    s.methods.push_back(m);
    s.images.push_back(oracle::random_image(h, w, derive_seed(seed, method_index(m))));
  }
  return s;
}

// Stacks of noisy phantom copies whose target is their pixelwise mean.
PairedPatches mean_target_patches(std::size_t n_images) {
  PairedPatches data;
  PhantomConfig pc;
  pc.height = pc.width = 32;
  for (std::uint64_t s = 0; s < n_images; ++s) {
    const Image hr = generate_phantom(pc, s + 1);
    PredictionStack st;
    Rng rng(derive_seed(40, s));
    for (SRMethod m : kAllMethods) {
      Image noisy = hr;
      for (double& v : noisy.values()) v += 0.05 * rng.normal();
      st.methods.push_back(m);
      st.images.push_back(std::move(noisy));
    }
    append_patches(data, st.pointers(), average_ensemble(st), 16, 8);
  }
  return data;
}

double mae_of(const IntegratorModel& model, const PairedPatches& data) {
  nn::NoGrad ng;
  const nn::Var out = nn::generator_forward(model.spec, model.params, nn::constant(data.inputs));
  return nn::mean_absolute_error(out, nn::constant(data.targets)).value()[0];
}

}  // namespace

TEST_CASE("averaging is permutation invariant and idempotent") {
  const PredictionStack s = random_stack(9, 7, 3);
  const Image avg = average_ensemble(s);
  PredictionStack shuffled = s;
  std::reverse(shuffled.methods.begin(), shuffled.methods.end());
  std::reverse(shuffled.images.begin(), shuffled.images.end());
  CHECK(max_abs_diff(average_ensemble(shuffled), avg) < 1e-15);
  PredictionStack same;
  for (SRMethod m : kAllMethods) {
    same.methods.push_back(m);
    same.images.push_back(s.images[0]);
  }
  CHECK(max_abs_diff(average_ensemble(same), s.images[0]) < 1e-15);
  double want = 0;
  for (const Image& img : s.images) want += img(4, 3);
  CHECK(avg(4, 3) == doctest::Approx(want / 5).epsilon(1e-15));
}

TEST_CASE("stack validation and subsets") {
  PredictionStack s = random_stack(6, 6, 1);
  const PredictionStack three = s.subset(kThree);
  CHECK(three.methods == kThree);
  CHECK(three.images[2] == s.images[2]);
  PredictionStack bad = s;
  bad.images[1] = Image(6, 5);
  CHECK_THROWS_AS(bad.validate(), DimensionError);
  CHECK_THROWS_AS(average_ensemble(PredictionStack{}), UsageError);
  CHECK_THROWS_AS(three.subset({SRMethod::APlus}), DataError);
}

TEST_CASE("integrator takes three or five inputs") {
  CHECK(integrator_spec(5, 1.0).in_channels == 5);
  CHECK(integrator_spec(3, 1.0).in_channels == 3);
  CHECK(integrator_spec(5, 1.0).channels(6, 1) == 1);
  CHECK_THROWS_AS(integrator_spec(4, 1.0), ConfigError);
  CHECK_THROWS_AS(integrator_spec(1, 1.0), ConfigError);
  CHECK(method_order_hash(kThree) != method_order_hash({SRMethod::Bicubic, SRMethod::Zip, SRMethod::Nedi}));
}

TEST_CASE("zero-weight integrator gives zero output") {
  IntegratorModel m;
  m.methods.assign(kAllMethods.begin(), kAllMethods.end());
  m.spec = integrator_spec(5, 1.0 / 16);
  m.params = nn::init_generator(m.spec, 1);
  for (const std::string& name : m.params.names()) m.params.set(name, nn::Tensor(m.params.get(name).shape()));
  const Image out = integrate(m, random_stack(16, 16, 2));
  CHECK(out.max() == 0.0);
  CHECK(out.min() == 0.0);
}

TEST_CASE("channel order must match the model") {
  IntegratorModel m;
  m.methods = kThree;
  m.spec = integrator_spec(3, 1.0 / 16);
  m.params = nn::init_generator(m.spec, 1);
  PredictionStack s = random_stack(8, 8, 3).subset({SRMethod::Bicubic, SRMethod::Zip, SRMethod::Nedi});
  CHECK_THROWS_AS(integrate(m, s), ConfigError);
  CHECK_THROWS_AS(integrate(m, random_stack(8, 8, 3)), ConfigError);
  CHECK_NOTHROW(integrate(m, random_stack(8, 8, 3).subset(kThree)));
}

TEST_CASE("residual integrator starts at the average") {
  IntegratorModel m;
  m.methods.assign(kAllMethods.begin(), kAllMethods.end());
  m.spec = integrator_spec(5, 1.0 / 16);
  m.spec.residual = true;
  m.params = nn::init_generator(m.spec, 4);
  const PredictionStack s = random_stack(16, 16, 5);
  CHECK(max_abs_diff(integrate(m, s), average_ensemble(s)) < 1e-14);
}

TEST_CASE("training on mean targets improves on the untrained model") {
  const PairedPatches data = mean_target_patches(2);
  IntegratorConfig cfg;
  cfg.width = 1.0 / 16;
  cfg.epochs = 4;
  cfg.batch = 2;
  cfg.lr = 1e-3;
  cfg.seed = 9;
  cfg.out_dir = fs::temp_directory_path() / "ensr_test_ensemble" / "train";
  fs::remove_all(cfg.out_dir);
  IntegratorModel untrained;
  untrained.spec = integrator_spec(5, cfg.width);
  untrained.params = nn::init_generator(untrained.spec, derive_seed(cfg.seed, 11));
  const IntegratorResult r = train_integrator(data, cfg);
  REQUIRE(r.epochs.size() == 4);
  CHECK(mae_of(r.model, data) < 0.5 * mae_of(untrained, data));

  // deterministic, and the saved model is the trained one
  CHECK(train_integrator(data, cfg).model.params.hash() == r.model.params.hash());
  const IntegratorModel back = IntegratorModel::load(cfg.out_dir / "model");
  CHECK(back.params.hash() == r.model.params.hash());
  CHECK(back.methods == r.model.methods);
  CHECK(fs::exists(cfg.out_dir / "losses.csv"));

  cfg.methods = kThree;
  CHECK_THROWS_AS(train_integrator(data, cfg), DimensionError);
}

TEST_CASE("whole-image integration of a residual model at init matches patch-and-stitch") {
  IntegratorModel m;
  m.methods.assign(kAllMethods.begin(), kAllMethods.end());
  m.spec = integrator_spec(5, 1.0 / 16);
  m.spec.residual = true;
  m.params = nn::init_generator(m.spec, 4);
  const PredictionStack s = random_stack(64, 64, 8);
  std::vector<PatchGrid> grids;
  for (const Image& img : s.images) grids.push_back(patchify(img, 32, 16));
  PatchGrid out = grids[0];
  for (std::size_t k = 0; k < out.patches.size(); ++k) {
    PredictionStack p;
    p.methods = s.methods;
    for (const PatchGrid& g : grids) p.images.push_back(g.patches[k]);
    out.patches[k] = integrate(m, p);
  }
  CHECK(max_abs_diff(unpatchify(out), integrate(m, s)) < 1e-6);
}
