#include "apm/unet.hpp"

#include <cmath>
#include <sstream>

#include "apm/rng.hpp"

namespace apm {

void validate(const UNetConfig& cfg) {
  if (cfg.depth < 1) throw ConfigError("unet: depth must be >= 1");
  if (cfg.base_channels < 1)
    throw ConfigError("unet: base_channels must be >= 1");
  if (cfg.in_channels < 1 || cfg.out_channels < 1)
    throw ConfigError("unet: channel counts must be >= 1");
  if (cfg.residual && cfg.in_channels != cfg.out_channels)
    throw ConfigError("unet: residual mode requires in_channels == out_channels");
}

std::string canonical_config_string(const UNetConfig& cfg) {
  std::ostringstream os;
  os << "in_channels=" << cfg.in_channels
     << ";base_channels=" << cfg.base_channels << ";depth=" << cfg.depth
     << ";out_channels=" << cfg.out_channels << ";seed=" << cfg.seed
     << ";residual=" << (cfg.residual ? 1 : 0);
  return os.str();
}

std::vector<detail::ConvSpec> detail::unet_conv_layers(const UNetConfig& cfg) {
  std::vector<ConvSpec> layers;
  auto width = [&](int level) { return cfg.base_channels << level; };

  for (int i = 0; i < cfg.depth; ++i) {
    const int cin = i == 0 ? cfg.in_channels : width(i - 1);
    const std::string name = "enc" + std::to_string(i);
    layers.push_back({name + ".conv1", cin, width(i)});
    layers.push_back({name + ".conv2", width(i), width(i)});
  }
  layers.push_back({"bottleneck.conv1", width(cfg.depth - 1), width(cfg.depth)});
  layers.push_back({"bottleneck.conv2", width(cfg.depth), width(cfg.depth)});
  for (int i = cfg.depth - 1; i >= 0; --i) {
    const std::string name = "dec" + std::to_string(i);
    layers.push_back({name + ".conv1", width(i + 1) + width(i), width(i)});
    layers.push_back({name + ".conv2", width(i), width(i)});
  }
  layers.push_back({"final", cfg.base_channels, cfg.out_channels});
  return layers;
}

ParameterRegistry ParameterRegistry::for_config(const UNetConfig& cfg) {
  validate(cfg);
  ParameterRegistry reg;
  std::size_t offset = 0;
  for (const auto& layer : detail::unet_conv_layers(cfg)) {
    const std::size_t wlen = static_cast<std::size_t>(layer.cout) * layer.cin * 9;
    reg.entries_.push_back(
        {layer.name + ".weight", {layer.cout, layer.cin, 3, 3}, offset, wlen});
    offset += wlen;
    reg.entries_.push_back({layer.name + ".bias",
                            {layer.cout},
                            offset,
                            static_cast<std::size_t>(layer.cout)});
    offset += static_cast<std::size_t>(layer.cout);
  }
  reg.total_len_ = offset;
  return reg;
}

UNet::UNet(UNetConfig cfg) : cfg_(cfg) {
  validate(cfg_);
  layers_ = detail::unet_conv_layers(cfg_);
  registry_ = ParameterRegistry::for_config(cfg_);
}

std::vector<double> UNet::init_params() const {
  std::vector<double> params(registry_.total_len(), 0.0);
  Rng rng(cfg_.seed);
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const auto& weight = registry_.entries()[2 * li];
    const double bound = std::sqrt(6.0 / (layers_[li].cin * 9.0));
    for (std::size_t i = 0; i < weight.len; ++i)
      params[weight.offset + i] = rng.uniform(-bound, bound);
    // biases stay zero
  }
  return params;
}

ForwardResult UNet::forward(const Tensor& x, std::span<const double> params,
                            bool track_grad) const {
  if (params.size() != registry_.total_len())
    throw ShapeError("unet: parameter vector has length " +
                     std::to_string(params.size()) + ", registry expects " +
                     std::to_string(registry_.total_len()));
  if (x.shape().size() != 4 || x.dim(1) != cfg_.in_channels)
    throw ShapeError("unet: input must be [N," +
                     std::to_string(cfg_.in_channels) + ",H,W]");
  const int H = x.dim(2), W = x.dim(3);
  const int div = 1 << cfg_.depth;
  if (H % div != 0 || W % div != 0)
    throw ShapeError("unet: spatial dims must be divisible by " +
                     std::to_string(div) + ", got " + std::to_string(H) + "x" +
                     std::to_string(W));

  ForwardResult result;
  result.param_leaves.reserve(registry_.entries().size());
  for (const auto& entry : registry_.entries()) {
    std::vector<double> slice(params.begin() + entry.offset,
                              params.begin() + entry.offset + entry.len);
    result.param_leaves.push_back(
        Tensor::from_data(entry.shape, std::move(slice), track_grad));
  }

  std::size_t li = 0;
  auto conv_relu = [&](const Tensor& in) {
    Tensor out = relu(conv2d(in, result.param_leaves[2 * li],
                             result.param_leaves[2 * li + 1]));
    ++li;
    return out;
  };

  Tensor cur = x;
  std::vector<Tensor> skips;
  for (int i = 0; i < cfg_.depth; ++i) {
    cur = conv_relu(conv_relu(cur));
    skips.push_back(cur);
    cur = maxpool2(cur);
  }
  cur = conv_relu(conv_relu(cur));
  for (int i = cfg_.depth - 1; i >= 0; --i) {
    cur = concat_channels(upsample_nearest2(cur), skips[i]);
    cur = conv_relu(conv_relu(cur));
  }
  cur = conv2d(cur, result.param_leaves[2 * li], result.param_leaves[2 * li + 1]);
  if (cfg_.residual) cur = add(cur, x);
  result.output = cur;
  return result;
}

std::vector<double> UNet::collect_gradients(const ForwardResult& result) const {
  std::vector<double> flat(registry_.total_len(), 0.0);
  const auto& entries = registry_.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Tensor& leaf = result.param_leaves[i];
    if (!leaf.has_grad()) continue;
    auto g = leaf.grad();
    std::copy(g.begin(), g.end(), flat.begin() + entries[i].offset);
  }
  return flat;
}

}  // namespace apm
