#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace hndh {

// Real-valued network output, one component per code bit.
using Embedding = std::vector<double>;

struct HashHeadConfig {
  std::size_t input_dim = 0;
  std::size_t code_length = 48;
  std::vector<std::size_t> hidden_dims;  // empty: a single affine layer into the code
  double init_sigma = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Affine layer y = W x + b with W stored out x in, row-major.
struct Layer {
  std::size_t out = 0;
  std::size_t in = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  std::span<const double> row(std::size_t o) const { return {weights.data() + o * in, in}; }

  friend bool operator==(const Layer&, const Layer&) = default;
};

// Every layer is followed by tanh, including the output layer.
struct HashHeadParams {
  std::vector<Layer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in; }
  std::size_t code_length() const { return layers.empty() ? 0 : layers.back().out; }
  std::size_t parameter_count() const;

  // Same shapes, all entries zero.
  HashHeadParams zeros_like() const;
  void validate() const;

  friend bool operator==(const HashHeadParams&, const HashHeadParams&) = default;
};

// Activations of every layer for one input: activations[0] is the input,
// activations.back() the embedding.
struct ForwardTrace {
  std::vector<std::vector<double>> activations;

  const std::vector<double>& output() const { return activations.back(); }
};

HashHeadParams init_params(const HashHeadConfig& config);

Embedding forward(const HashHeadParams& params, std::span<const double> x);
ForwardTrace forward_trace(const HashHeadParams& params, std::span<const double> x);

// Pre-activation of the output layer (before the final tanh).
std::vector<double> output_preactivation(const HashHeadParams& params, std::span<const double> x);

// sign(u) with ties at zero mapped to +1.
std::vector<std::int8_t> encode(std::span<const double> u);

void save_checkpoint(const HashHeadParams& params, const std::filesystem::path& path);
HashHeadParams load_checkpoint(const std::filesystem::path& path);

}  // namespace hndh
