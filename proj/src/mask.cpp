#include "apm/mask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace apm {

std::vector<double> GradientProfile::mean_abs() const {
  if (batches_seen <= 0)
    throw Error("gradient profile: no batches accumulated");
  std::vector<double> mean(abs_grad_sum);
  const double inv = 1.0 / static_cast<double>(batches_seen);
  for (double& v : mean) v *= inv;
  return mean;
}

std::vector<std::size_t> TaskMask::indices() const {
  std::vector<std::size_t> idx;
  idx.reserve(bits.popcount());
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits.test(i)) idx.push_back(i);
  return idx;
}

void adam_step(std::span<double> values, std::span<const double> grads,
               AdamState& state, const AdamParams& params) {
  if (values.size() != grads.size())
    throw ShapeError("adam: gradient length does not match value length");
  if (state.m.size() != values.size() || state.v.size() != values.size())
    throw ShapeError("adam: optimizer state length does not match values");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(params.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(params.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double g = grads[i];
    state.m[i] = params.beta1 * state.m[i] + (1.0 - params.beta1) * g;
    state.v[i] = params.beta2 * state.v[i] + (1.0 - params.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    values[i] -= params.lr * mhat / (std::sqrt(vhat) + params.eps);
  }
}

void accumulate_gradients(GradientProfile& profile, const UNet& net,
                          std::span<const double> base_params,
                          const Batch& batch, const LossConfig& loss_cfg) {
  const std::size_t total = net.registry().total_len();
  if (profile.abs_grad_sum.empty()) profile.abs_grad_sum.assign(total, 0.0);
  if (profile.abs_grad_sum.size() != total)
    throw ShapeError("gradient profile: length does not match the registry");

  auto result = net.forward(batch.input, base_params, true);
  Tensor loss = total_loss(result.output, batch.target, loss_cfg);
  loss.backward();
  const auto grads = net.collect_gradients(result);
  for (std::size_t i = 0; i < total; ++i)
    profile.abs_grad_sum[i] += std::abs(grads[i]);
  profile.batches_seen += 1;
}

namespace {

// Mathematical ceil(fraction * n) under floating-point noise: products that
// land within 1e-6 of an integer are treated as that integer.
std::size_t top_k_count(double fraction, std::size_t n) {
  const double exact = fraction * static_cast<double>(n);
  const double nearest = std::round(exact);
  if (std::abs(exact - nearest) < 1e-6)
    return static_cast<std::size_t>(nearest);
  return static_cast<std::size_t>(std::ceil(exact));
}

}  // namespace

TaskMask build_mask(const GradientProfile& profile, double fraction) {
  if (profile.batches_seen < 1 || profile.abs_grad_sum.empty())
    throw Error("build_mask: empty gradient profile");
  if (!(fraction > 0.0) || !(fraction < 1.0))
    throw ParamError("build_mask: fraction must be in (0,1)");

  const auto mean = profile.mean_abs();
  const std::size_t n = mean.size();
  const std::size_t k = top_k_count(fraction, n);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (mean[a] != mean[b]) return mean[a] > mean[b];
    return a < b;  // ties: lower index wins
  });

  TaskMask mask;
  mask.task = profile.task;
  mask.fraction = fraction;
  mask.bits = DynBitset(n);
  for (std::size_t i = 0; i < k; ++i) mask.bits.set(order[i]);
  mask.gamma = mean[order[k - 1]];
  return mask;
}

void init_overrides(ParameterStore& store, Task task) {
  auto it = store.masks.find(task);
  if (it == store.masks.end())
    throw Error(std::string("init_overrides: no mask for task '") +
                to_string(task) + "'");
  if (it->second.bits.size() != store.base.size())
    throw ShapeError("init_overrides: mask length does not match base");
  std::vector<double> values;
  for (std::size_t idx : it->second.indices()) values.push_back(store.base[idx]);
  store.overrides[task] = std::move(values);
}

std::vector<double> effective_params(const ParameterStore& store, Task task) {
  auto mit = store.masks.find(task);
  auto oit = store.overrides.find(task);
  if (mit == store.masks.end() || oit == store.overrides.end())
    throw Error(std::string("effective_params: task '") + to_string(task) +
                "' has no mask/overrides (run build-mask first)");
  std::vector<double> merged = store.base;
  std::size_t pos = 0;
  const auto& bits = mit->second.bits;
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits.test(i)) merged[i] = oit->second[pos++];
  if (pos != oit->second.size())
    throw ShapeError("effective_params: override length does not match mask");
  return merged;
}

void masked_step(ParameterStore& store, Task task,
                 std::span<const double> grads, AdamState& state,
                 const AdamParams& params) {
  if (grads.size() != store.base.size())
    throw ShapeError("masked_step: gradient length does not match base");
  auto mit = store.masks.find(task);
  auto oit = store.overrides.find(task);
  if (mit == store.masks.end() || oit == store.overrides.end())
    throw Error(std::string("masked_step: task '") + to_string(task) +
                "' has no mask/overrides");
  std::vector<double> g;
  g.reserve(oit->second.size());
  for (std::size_t idx : mit->second.indices()) g.push_back(grads[idx]);
  adam_step(oit->second, g, state, params);
}

}  // namespace apm
