#include "hndh/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <string_view>

#include "binary_io.hpp"
#include "hndh/error.hpp"

namespace hndh {

namespace {

constexpr std::string_view kModelMagic = "HNDM";
constexpr std::uint8_t kModelVersion = 1;

// Largest double below 1. tanh rounds to exactly +-1 for |z| > ~19; clamping
// keeps embeddings strictly inside (-1, 1).
const double kOpenUnit = std::nextafter(1.0, 0.0);

double squash(double z) { return std::clamp(std::tanh(z), -kOpenUnit, kOpenUnit); }

std::vector<double> affine(const Layer& layer, std::span<const double> x) {
  std::vector<double> z(layer.out);
  for (std::size_t o = 0; o < layer.out; ++o) {
    const auto w = layer.row(o);
    double acc = layer.bias[o];
    for (std::size_t j = 0; j < layer.in; ++j) acc += w[j] * x[j];
    z[o] = acc;
  }
  return z;
}

void check_input(const HashHeadParams& params, std::span<const double> x) {
  if (params.layers.empty()) throw ValidationError("hash head has no layers");
  if (x.size() != params.input_dim()) {
    throw ValidationError("input has " + std::to_string(x.size()) + " features, head expects " +
                          std::to_string(params.input_dim()));
  }
}

}  // namespace

void HashHeadConfig::validate() const {
  if (input_dim < 1) throw ValidationError("input_dim must be >= 1");
  if (code_length < 1) throw ValidationError("code_length must be >= 1");
  for (auto width : hidden_dims) {
    if (width < 1) throw ValidationError("hidden layer widths must be >= 1");
  }
  if (!(init_sigma >= 0.0) || !std::isfinite(init_sigma)) throw ValidationError("init_sigma must be >= 0");
}

std::size_t HashHeadParams::parameter_count() const {
  std::size_t count = 0;
  for (const auto& layer : layers) count += layer.weights.size() + layer.bias.size();
  return count;
}

HashHeadParams HashHeadParams::zeros_like() const {
  HashHeadParams out;
  for (const auto& layer : layers) {
    out.layers.push_back(Layer{layer.out, layer.in, std::vector<double>(layer.weights.size(), 0.0),
                               std::vector<double>(layer.bias.size(), 0.0)});
  }
  return out;
}

void HashHeadParams::validate() const {
  if (layers.empty()) throw ValidationError("hash head has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& layer = layers[i];
    if (layer.out == 0 || layer.in == 0) throw ValidationError("layer " + std::to_string(i) + " is empty");
    if (layer.weights.size() != layer.out * layer.in || layer.bias.size() != layer.out) {
      throw ValidationError("layer " + std::to_string(i) + " storage does not match its shape");
    }
    if (i > 0 && layers[i - 1].out != layer.in) {
      throw ValidationError("layer " + std::to_string(i) + " input does not chain from previous output");
    }
    for (double v : layer.weights) {
      if (!std::isfinite(v)) throw ValidationError("non-finite weight in layer " + std::to_string(i));
    }
    for (double v : layer.bias) {
      if (!std::isfinite(v)) throw ValidationError("non-finite bias in layer " + std::to_string(i));
    }
  }
}

HashHeadParams init_params(const HashHeadConfig& config) {
  config.validate();
  std::vector<std::size_t> widths{config.input_dim};
  widths.insert(widths.end(), config.hidden_dims.begin(), config.hidden_dims.end());
  widths.push_back(config.code_length);

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  HashHeadParams params;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    Layer layer{widths[i + 1], widths[i], std::vector<double>(widths[i + 1] * widths[i]),
                std::vector<double>(widths[i + 1], 0.0)};
    const double stddev = config.init_sigma / std::sqrt(static_cast<double>(layer.in));
    for (auto& w : layer.weights) w = stddev * gauss(rng);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

ForwardTrace forward_trace(const HashHeadParams& params, std::span<const double> x) {
  check_input(params, x);
  ForwardTrace trace;
  trace.activations.reserve(params.layers.size() + 1);
  trace.activations.emplace_back(x.begin(), x.end());
  for (const auto& layer : params.layers) {
    auto z = affine(layer, trace.activations.back());
    for (auto& v : z) v = squash(v);
    trace.activations.push_back(std::move(z));
  }
  return trace;
}

Embedding forward(const HashHeadParams& params, std::span<const double> x) {
  check_input(params, x);
  std::vector<double> h(x.begin(), x.end());
  for (const auto& layer : params.layers) {
    h = affine(layer, h);
    for (auto& v : h) v = squash(v);
  }
  return h;
}

std::vector<double> output_preactivation(const HashHeadParams& params, std::span<const double> x) {
  check_input(params, x);
  std::vector<double> h(x.begin(), x.end());
  for (std::size_t i = 0; i + 1 < params.layers.size(); ++i) {
    h = affine(params.layers[i], h);
    for (auto& v : h) v = squash(v);
  }
  return affine(params.layers.back(), h);
}

std::vector<std::int8_t> encode(std::span<const double> u) {
  std::vector<std::int8_t> bits(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) bits[k] = u[k] >= 0.0 ? 1 : -1;
  return bits;
}

void save_checkpoint(const HashHeadParams& params, const std::filesystem::path& path) {
  params.validate();
  io::Writer out;
  out.bytes(kModelMagic);
  out.put<std::uint8_t>(kModelVersion);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(params.layers.size()));
  for (const auto& layer : params.layers) {
    out.put<std::uint32_t>(static_cast<std::uint32_t>(layer.out));
    out.put<std::uint32_t>(static_cast<std::uint32_t>(layer.in));
    for (double w : layer.weights) out.put<double>(w);
    for (double b : layer.bias) out.put<double>(b);
  }
  io::write_file_atomic(path, out.buffer());
}

HashHeadParams load_checkpoint(const std::filesystem::path& path) {
  io::Reader in(io::read_file(path));
  in.expect_magic(kModelMagic, "checkpoint");
  const auto version = in.get<std::uint8_t>("version");
  if (version != kModelVersion) {
    throw LoadError(LoadErrorKind::unsupported_version, "checkpoint version " + std::to_string(version));
  }
  const std::size_t count = in.get<std::uint32_t>("layer count");
  if (count == 0) throw LoadError(LoadErrorKind::dimension_mismatch, "checkpoint has no layers");
  HashHeadParams params;
  for (std::size_t i = 0; i < count; ++i) {
    Layer layer;
    layer.out = in.get<std::uint32_t>("layer out");
    layer.in = in.get<std::uint32_t>("layer in");
    in.require((layer.out * layer.in + layer.out) * sizeof(double), "layer values");
    layer.weights.resize(layer.out * layer.in);
    layer.bias.resize(layer.out);
    for (auto& w : layer.weights) w = in.get<double>("weights");
    for (auto& b : layer.bias) b = in.get<double>("bias");
    params.layers.push_back(std::move(layer));
  }
  if (in.remaining() != 0) {
    throw LoadError(LoadErrorKind::dimension_mismatch, "trailing bytes after checkpoint");
  }
  try {
    params.validate();
  } catch (const ValidationError& e) {
    throw LoadError(LoadErrorKind::dimension_mismatch, e.what());
  }
  return params;
}

}  // namespace hndh
