#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "apm/tensor.hpp"

namespace apm {

struct UNetConfig {
  int in_channels = 3;
  int base_channels = 8;
  int depth = 2;  // number of down/up levels
  int out_channels = 3;
  std::uint64_t seed = 42;
  // When set (and in==out channels), the network predicts a correction that
  // is added to its input instead of predicting the image directly.
  bool residual = false;
};

void validate(const UNetConfig& cfg);

// Stable textual form of the config; its SHA-256 is the checkpoint digest.
std::string canonical_config_string(const UNetConfig& cfg);

struct RegistryEntry {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t len = 0;
};

namespace detail {
struct ConvSpec {
  std::string name;
  int cin;
  int cout;
};
// Layer sequence in forward-pass use order; the registry mirrors it.
std::vector<ConvSpec> unet_conv_layers(const UNetConfig& cfg);
}  // namespace detail

// Maps every layer tensor to a contiguous slice of one flat parameter vector.
// The order is the forward-pass use order and is a pure function of the
// config, so the index space is identical across runs and platforms.
class ParameterRegistry {
 public:
  static ParameterRegistry for_config(const UNetConfig& cfg);

  const std::vector<RegistryEntry>& entries() const { return entries_; }
  std::size_t total_len() const { return total_len_; }

 private:
  std::vector<RegistryEntry> entries_;
  std::size_t total_len_ = 0;
};

struct ForwardResult {
  Tensor output;
  // One leaf per registry entry, in registry order; populated gradients are
  // gathered back into flat form by UNet::collect_gradients.
  std::vector<Tensor> param_leaves;
};

// Encoder/decoder restoration network: `depth` blocks of
// (conv3x3-relu-conv3x3-relu-maxpool), a bottleneck block, mirrored decoder
// blocks with nearest-neighbour upsampling and skip concatenation, and a
// final linear 3x3 projection.
class UNet {
 public:
  explicit UNet(UNetConfig cfg);

  const UNetConfig& config() const { return cfg_; }
  const ParameterRegistry& registry() const { return registry_; }

  // He-uniform weights, zero biases, drawn deterministically from cfg.seed.
  std::vector<double> init_params() const;

  // Runs the network on x with the given flat parameters. With track_grad the
  // forward builds a backward graph whose leaves are the per-layer parameter
  // tensors; without it no graph is allocated.
  ForwardResult forward(const Tensor& x, std::span<const double> params,
                        bool track_grad) const;

  // Flat gradient vector in registry order; zero where a leaf received none.
  std::vector<double> collect_gradients(const ForwardResult& result) const;

 private:
  UNetConfig cfg_;
  std::vector<detail::ConvSpec> layers_;
  ParameterRegistry registry_;
};

}  // namespace apm
