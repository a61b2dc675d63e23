#include "ensr/nn/layers.hpp"

#include <cmath>

#include "ensr/error.hpp"
#include "ensr/random.hpp"

namespace ensr::nn {
using nlohmann::json;

namespace {

std::size_t scaled(std::size_t c, double width) {
  const long v = std::lround(static_cast<double>(c) * width);
  return v < 1 ? 1 : static_cast<std::size_t>(v);
}

Tensor he_uniform(Rng& rng, std::size_t cout, std::size_t cin, std::size_t k) {
  Tensor w({cout, cin, k, k});
  const double bound = std::sqrt(6.0 / static_cast<double>(cin * k * k));
  for (double& v : w.data) v = rng.uniform(-bound, bound);
  return w;
}

void add_conv(ParamStore& ps, Rng& rng, const std::string& name, std::size_t cin, std::size_t cout,
              std::size_t k) {
  ps.add(name + ".w", he_uniform(rng, cout, cin, k));
  ps.add(name + ".b", Tensor({cout}));
}

void add_norm(ParamStore& ps, const std::string& name, std::size_t c) {
  ps.add(name + ".gamma", Tensor({c}, 1.0));
  ps.add(name + ".beta", Tensor({c}));
}

Var conv(const ParamStore& ps, const std::string& name, const Var& x, std::size_t stride) {
  const Var& w = ps.get(name + ".w");
  return add_channel_bias(conv2d(x, w, {stride, w.dim(2) / 2}), ps.get(name + ".b"));
}

Var norm(const ParamStore& ps, const std::string& name, const Var& x) {
  return layer_norm(x, ps.get(name + ".gamma"), ps.get(name + ".beta"));
}

LayerSpec conv_spec(std::string name, std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride) {
  LayerSpec s;
  s.kind = LayerKind::Conv2d;
  s.name = std::move(name);
  s.in_channels = cin;
  s.out_channels = cout;
  s.kernel = k;
  s.stride = stride;
  s.padding = k / 2;
  return s;
}

LayerSpec simple_spec(LayerKind kind, std::string name, std::size_t c, double slope = 0.0) {
  LayerSpec s;
  s.kind = kind;
  s.name = std::move(name);
  s.in_channels = c;
  s.out_channels = c;
  s.slope = slope;
  return s;
}

std::string block_name(std::size_t b) { return "block" + std::to_string(b + 1); }

// Block whose output is concatenated onto the input of block b, or -1.
int skip_source(std::size_t b) {
  switch (b) {
    case 4: return 2;
    case 5: return 1;
    case 6: return 0;
    default: return -1;
  }
}

}  // namespace

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::LayerNorm: return "layernorm";
    case LayerKind::Relu: return "relu";
    case LayerKind::LeakyRelu: return "lrelu";
    case LayerKind::ConcatSkip: return "concat_skip";
    case LayerKind::Gap: return "gap";
  }
  return "?";
}

void validate_layer(const LayerSpec& s) {
  if (s.kind == LayerKind::Conv2d) {
    if (s.stride != 1 && s.stride != 2) throw DimensionError(s.name + ": stride must be 1 or 2");
    if (s.kernel % 2 == 0) throw DimensionError(s.name + ": kernel must be odd");
    if (s.in_channels == 0 || s.out_channels == 0) throw DimensionError(s.name + ": zero channels");
  }
  if (s.kind == LayerKind::LeakyRelu && !(s.slope > 0.0 && s.slope < 1.0))
    throw DimensionError(s.name + ": leaky slope must lie in (0, 1)");
}

json layers_to_json(const std::vector<LayerSpec>& layers) {
  json out = json::array();
  for (const LayerSpec& s : layers) {
    json j{{"kind", layer_kind_name(s.kind)}, {"name", s.name}};
    switch (s.kind) {
      case LayerKind::Conv2d:
        j["in"] = s.in_channels;
        j["out"] = s.out_channels;
        j["kernel"] = s.kernel;
        j["stride"] = s.stride;
        j["padding"] = s.padding;
        break;
      case LayerKind::LeakyRelu: j["slope"] = s.slope; break;
      case LayerKind::ConcatSkip: j["from"] = s.skip_from; break;
      default: break;
    }
    out.push_back(std::move(j));
  }
  return out;
}

std::size_t GeneratorSpec::channels(std::size_t block, std::size_t conv) const {
  if (block == 6 && conv == 1) return 1;
  return scaled(kPlan.at(block).at(conv), width);
}

std::size_t GeneratorSpec::block_input(std::size_t block) const {
  if (block == 0) return in_channels;
  std::size_t c = channels(block - 1, 1);
  if (const int src = skip_source(block); src >= 0) c += channels(static_cast<std::size_t>(src), 1);
  return c;
}

std::vector<LayerSpec> GeneratorSpec::layers() const {
  std::vector<LayerSpec> out;
  for (std::size_t b = 0; b < kPlan.size(); ++b) {
    const std::string bn = block_name(b);
    if (const int src = skip_source(b); src >= 0) {
      LayerSpec s = simple_spec(LayerKind::ConcatSkip, bn + ".skip", block_input(b));
      s.skip_from = block_name(static_cast<std::size_t>(src));
      out.push_back(s);
    }
    std::size_t cin = block_input(b);
    for (std::size_t c = 0; c < 2; ++c) {
      const std::string cn = bn + ".conv" + std::to_string(c + 1);
      const std::size_t cout = channels(b, c);
      out.push_back(conv_spec(cn, cin, cout, kernel, 1));
      if (!(b == 6 && c == 1)) {
        out.push_back(simple_spec(LayerKind::LayerNorm, bn + ".ln" + std::to_string(c + 1), cout));
        out.push_back(simple_spec(LayerKind::Relu, bn + ".relu" + std::to_string(c + 1), cout));
      }
      cin = cout;
    }
  }
  for (const auto& s : out) validate_layer(s);
  return out;
}

std::size_t GeneratorSpec::parameter_count() const {
  std::size_t n = 0;
  for (const LayerSpec& s : layers()) {
    if (s.kind == LayerKind::Conv2d) n += s.out_channels * s.in_channels * s.kernel * s.kernel + s.out_channels;
    if (s.kind == LayerKind::LayerNorm) n += 2 * s.out_channels;
  }
  return n;
}

std::size_t DiscriminatorSpec::channels(std::size_t block) const {
  if (block == kChannels.size() - 1) return 1;
  return scaled(kChannels.at(block), width);
}

std::vector<LayerSpec> DiscriminatorSpec::layers() const {
  std::vector<LayerSpec> out;
  std::size_t cin = in_channels;
  for (std::size_t b = 0; b < kChannels.size(); ++b) {
    const std::string bn = block_name(b);
    const std::size_t cout = channels(b);
    out.push_back(conv_spec(bn + ".conv", cin, cout, kernel, kStrides[b]));
    if (b + 1 < kChannels.size()) {
      out.push_back(simple_spec(LayerKind::LayerNorm, bn + ".ln", cout));
      out.push_back(simple_spec(LayerKind::LeakyRelu, bn + ".lrelu", cout, slope));
    }
    cin = cout;
  }
  out.push_back(simple_spec(LayerKind::Gap, "gap", 1));
  for (const auto& s : out) validate_layer(s);
  return out;
}

namespace {

ParamStore init_from_layers(const std::vector<LayerSpec>& layers, std::uint64_t seed) {
  ParamStore ps;
  Rng rng(seed);
  for (const LayerSpec& s : layers) {
    if (s.kind == LayerKind::Conv2d) add_conv(ps, rng, s.name, s.in_channels, s.out_channels, s.kernel);
    if (s.kind == LayerKind::LayerNorm) add_norm(ps, s.name, s.out_channels);
  }
  return ps;
}

}  // namespace

ParamStore init_generator(const GeneratorSpec& spec, std::uint64_t seed) {
  ParamStore ps = init_from_layers(spec.layers(), seed);
  if (spec.residual) {
    const std::string last = block_name(6) + ".conv2.w";
    ps.set(last, Tensor(ps.get(last).shape()));
  }
  return ps;
}

ParamStore init_discriminator(const DiscriminatorSpec& spec, std::uint64_t seed) {
  return init_from_layers(spec.layers(), seed);
}

Var generator_forward(const GeneratorSpec& spec, const ParamStore& ps, const Var& x) {
  if (x.shape().size() != 4 || x.dim(1) != spec.in_channels)
    throw DimensionError("generator expects (N, " + std::to_string(spec.in_channels) + ", H, W), got " +
                         shape_str(x.shape()));
  std::array<Var, 7> outs;
  Var h = x;
  for (std::size_t b = 0; b < outs.size(); ++b) {
    const std::string bn = block_name(b);
    if (const int src = skip_source(b); src >= 0) h = concat_channels(h, outs[static_cast<std::size_t>(src)]);
    h = relu(norm(ps, bn + ".ln1", conv(ps, bn + ".conv1", h, 1)));
    h = conv(ps, bn + ".conv2", h, 1);
    if (b + 1 < outs.size()) h = relu(norm(ps, bn + ".ln2", h));
    outs[b] = h;
  }
  if (spec.residual) {
    Var base = slice_channels(x, 0, 1);
    for (std::size_t c = 1; c < spec.in_channels; ++c) base = add(base, slice_channels(x, c, 1));
    if (spec.in_channels > 1) base = scale(base, 1.0 / static_cast<double>(spec.in_channels));
    h = add(h, base);
  }
  return h;
}

Var discriminator_forward(const DiscriminatorSpec& spec, const ParamStore& ps, const Var& x) {
  if (x.shape().size() != 4 || x.dim(1) != spec.in_channels)
    throw DimensionError("discriminator expects (N, " + std::to_string(spec.in_channels) + ", H, W), got " +
                         shape_str(x.shape()));
  Var h = x;
  for (std::size_t b = 0; b < DiscriminatorSpec::kChannels.size(); ++b) {
    const std::string bn = block_name(b);
    h = conv(ps, bn + ".conv", h, DiscriminatorSpec::kStrides[b]);
    if (b + 1 < DiscriminatorSpec::kChannels.size()) h = leaky_relu(norm(ps, bn + ".ln", h), spec.slope);
  }
  return global_avg_pool(h);
}

RandomConvExtractor::RandomConvExtractor(std::uint64_t seed, std::vector<std::size_t> channels,
                                         std::vector<std::size_t> strides)
    : seed_(seed), channels_(std::move(channels)), strides_(std::move(strides)) {
  if (channels_.size() != strides_.size() || channels_.empty())
    throw ConfigError("feature extractor: channel and stride lists must match");
  Rng rng(seed);
  std::size_t cin = 1;
  for (std::size_t c : channels_) {
    weights_.push_back(constant(he_uniform(rng, c, cin, 3)));
    biases_.push_back(constant(Tensor({c})));
    cin = c;
  }
}

Var RandomConvExtractor::features(const Var& x) const {
  Var h = x;
  for (std::size_t i = 0; i < weights_.size(); ++i)
    h = relu(add_channel_bias(conv2d(h, weights_[i], {strides_[i], 1}), biases_[i]));
  return h;
}

std::string RandomConvExtractor::describe() const {
  std::string s = "random_conv(seed=" + std::to_string(seed_) + ", channels=";
  for (std::size_t i = 0; i < channels_.size(); ++i) s += (i ? "-" : "") + std::to_string(channels_[i]);
  s += ", strides=";
  for (std::size_t i = 0; i < strides_.size(); ++i) s += (i ? "-" : "") + std::to_string(strides_[i]);
  return s + ")";
}

std::unique_ptr<FeatureExtractor> make_extractor(const std::string& name, std::uint64_t seed) {
  if (name == "identity") return std::make_unique<IdentityExtractor>();
  if (name == "random_conv") return std::make_unique<RandomConvExtractor>(seed);
  throw ConfigError("unknown feature extractor '" + name + "' (expected random_conv or identity)");
}

}  // namespace ensr::nn
