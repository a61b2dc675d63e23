#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ensr/ensemble.hpp"
#include "ensr/image_io.hpp"
#include "ensr/interpolation.hpp"
#include "ensr/kspace.hpp"
#include "oracles.hpp"

using namespace ensr;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "ensr_test_cli" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// Runs the CLI with stdout/stderr captured to `log`; returns the exit code.
int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(ENSR_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  const fs::path d = scratch("usage");
  CHECK(run("", d / "log") == 2);
  CHECK(run("no-such-command", d / "log") == 2);
  CHECK(run("downsample --out x.raw", d / "log") == 2);
  CHECK(run("--help", d / "log") == 0);
}

TEST_CASE("configuration errors exit with 3") {
  const fs::path d = scratch("config");
  CHECK(run("--set gan.epoch=3 show-config", d / "log") == 3);
  CHECK(run("--set gan.epochs=lots show-config", d / "log") == 3);
  CHECK(run("--preset huge show-config", d / "log") == 3);
  std::ofstream(d / "bad.cfg") << "seed = 1\nseed = 2\n";
  CHECK(run("--config " + (d / "bad.cfg").string() + " show-config", d / "log") == 3);
}

TEST_CASE("show-config echoes a parseable configuration") {
  const fs::path d = scratch("show");
  REQUIRE(run("--preset desk --set seed=4 show-config", d / "desk.cfg") == 0);
  const std::string text = slurp(d / "desk.cfg");
  CHECK(text.find("seed = 4") != std::string::npos);
  CHECK(text.find("desk-scale override") != std::string::npos);
  REQUIRE(run("--config " + (d / "desk.cfg").string() + " show-config", d / "again.cfg") == 0);
  CHECK(slurp(d / "again.cfg") == text);
  // flags override file values
  REQUIRE(run("--config " + (d / "desk.cfg").string() + " --set seed=5 show-config", d / "over.cfg") == 0);
  CHECK(slurp(d / "over.cfg").find("seed = 5") != std::string::npos);
}

TEST_CASE("downsample writes the LR image and optionally its k-space") {
  const fs::path d = scratch("down");
  const Image hr = oracle::random_image(16, 12, 3);
  write_raw(d / "hr.raw", hr);
  REQUIRE(run("downsample --in " + (d / "hr.raw").string() + " --out " + (d / "lr.raw").string() + " --save-kspace " +
                  (d / "k.raw").string(),
              d / "log") == 0);
  CHECK(read_raw(d / "lr.raw") == downsample_kspace(hr));
  std::uint32_t r = 0, c = 0;
  const auto k = read_raw_complex(d / "k.raw", r, c);
  CHECK(r == 16);
  CHECK(c == 12);
  CHECK(k == fft2(hr).data);

  write_raw(d / "odd.raw", oracle::random_image(5, 8, 1));
  CHECK(run("downsample --in " + (d / "odd.raw").string() + " --out " + (d / "o.raw").string(), d / "log") == 5);
  std::ofstream(d / "junk.raw") << "not an image";
  CHECK(run("downsample --in " + (d / "junk.raw").string() + " --out " + (d / "o.raw").string(), d / "log") == 4);
}

TEST_CASE("preprocess matches the library") {
  const fs::path d = scratch("pre");
  const Image lr = oracle::random_image(8, 10, 4);
  write_raw(d / "lr.raw", lr);
  REQUIRE(run("preprocess --method bi --in " + (d / "lr.raw").string() + " --out " + (d / "bi.raw").string(),
              d / "log") == 0);
  CHECK(read_raw(d / "bi.raw") == bicubic_upscale(lr, 2));
  REQUIRE(run("preprocess --method zip --in " + (d / "lr.raw").string() + " --out " + (d / "zip.raw").string(),
              d / "log") == 0);
  CHECK(max_abs_diff(read_raw(d / "zip.raw"), zip_upscale(lr, 16, 20)) == 0.0);
  // sc needs a dictionary
  CHECK(run("preprocess --method sc --in " + (d / "lr.raw").string() + " --out " + (d / "sc.raw").string(),
            d / "log") == 3);
  CHECK(run("preprocess --method lanczos --in " + (d / "lr.raw").string() + " --out " + (d / "x.raw").string(),
            d / "log") == 3);
}

TEST_CASE("evaluate and plot-accuracy write their CSVs") {
  const fs::path d = scratch("eval");
  fs::create_directories(d / "pred");
  fs::create_directories(d / "ref");
  const Image ref = oracle::random_image(16, 16, 5);
  Image pred = ref;
  for (double& v : pred.values()) v += 0.1;
  write_raw(d / "ref" / "a.raw", ref);
  write_raw(d / "pred" / "a.raw", pred);
  const std::string trees = " --pred " + (d / "pred").string() + " --ref " + (d / "ref").string();
  REQUIRE(run("evaluate" + trees + " --out " + (d / "m.csv").string(), d / "log") == 0);
  const std::string m = slurp(d / "m.csv");
  CHECK(m.rfind("id,psnr,ssim\n", 0) == 0);
  CHECK(m.find("a.raw,20") != std::string::npos);
  REQUIRE(run("plot-accuracy" + trees + " --out " + (d / "acc.csv").string(), d / "log") == 0);
  const std::string acc = slurp(d / "acc.csv");
  CHECK(acc.rfind("threshold,accuracy\n", 0) == 0);
  CHECK(acc.find("\n255,1\n") != std::string::npos);
  CHECK(run("evaluate --pred " + (d / "nowhere").string() + " --ref " + (d / "ref").string() + " --out " +
                (d / "x.csv").string(),
            d / "log") == 4);
}

TEST_CASE("predict-ensemble refuses a conflicting input count before computing") {
  const fs::path d = scratch("ens");
  IntegratorModel m;
  m.methods.assign(kAllMethods.begin(), kAllMethods.end());
  m.spec = integrator_spec(5, 1.0 / 16);
  m.params = nn::init_generator(m.spec, 1);
  m.save(d / "model");
  fs::create_directories(d / "stack");
  for (SRMethod s : kAllMethods)
    write_raw(d / "stack" / ("sr_" + std::string(method_name(s)) + ".raw"),
              oracle::random_image(16, 16, method_index(s)));
  const std::string base =
      "predict-ensemble --ckpt " + (d / "model").string() + " --stack " + (d / "stack").string() + " --out ";
  CHECK(run(base + (d / "bad.raw").string() + " --inputs 3", d / "log") == 3);
  CHECK_FALSE(fs::exists(d / "bad.raw"));
  REQUIRE(run(base + (d / "out.raw").string() + " --inputs 5", d / "log") == 0);
  PredictionStack st;
  for (SRMethod s : kAllMethods) {
    st.methods.push_back(s);
    st.images.push_back(read_raw(d / "stack" / ("sr_" + std::string(method_name(s)) + ".raw")));
  }
  CHECK(read_raw(d / "out.raw") == integrate(IntegratorModel::load(d / "model"), st));
}
