#pragma once

#include <map>
#include <span>
#include <vector>

#include "apm/bitset.hpp"
#include "apm/loss.hpp"
#include "apm/task.hpp"
#include "apm/unet.hpp"

namespace apm {

// Running sum of absolute parameter gradients for one task, accumulated over
// calibration batches on the frozen base parameters.
struct GradientProfile {
  Task task = Task::Rain;
  std::vector<double> abs_grad_sum;
  long batches_seen = 0;

  std::vector<double> mean_abs() const;
};

// Per-task selection over the flat parameter index space: the top `fraction`
// of parameters by mean absolute gradient. gamma is the selection threshold,
// i.e. the k-th largest mean gradient magnitude.
struct TaskMask {
  Task task = Task::Rain;
  DynBitset bits;
  double gamma = 0.0;
  double fraction = 0.10;

  // Ascending flat indices of the set bits; the storage order of overrides.
  std::vector<std::size_t> indices() const;
};

// Base parameter vector shared by all tasks plus per-task override values for
// masked indices. Unmasked entries are always served from base; fine-tuning a
// task touches only its own override copy.
struct ParameterStore {
  std::vector<double> base;
  std::map<Task, TaskMask> masks;
  std::map<Task, std::vector<double>> overrides;

  bool has_task(Task t) const {
    return masks.contains(t) && overrides.contains(t);
  }
};

struct AdamParams {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m, v;
  long step = 0;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

// One bias-corrected Adam update applied in place to `values`.
void adam_step(std::span<double> values, std::span<const double> grads,
               AdamState& state, const AdamParams& params);

// Runs one forward/backward on the base parameters and adds |grad_i| into the
// profile. Base parameters are never modified here.
void accumulate_gradients(GradientProfile& profile, const UNet& net,
                          std::span<const double> base_params,
                          const Batch& batch, const LossConfig& loss_cfg);

// Selects k = ceil(fraction * N) indices with the largest mean absolute
// gradient. Ties at the threshold resolve to the lowest parameter index so
// the popcount is exactly k on every platform.
TaskMask build_mask(const GradientProfile& profile, double fraction = 0.10);

// Copies base values at masked indices into the task's override vector;
// fine-tuning starts from the pre-trained point.
void init_overrides(ParameterStore& store, Task task);

// Merged full-length vector: overrides where the mask is set, base elsewhere.
std::vector<double> effective_params(const ParameterStore& store, Task task);

// Adam update restricted to the task's masked indices. grads is the
// full-length flat gradient; base stays untouched.
void masked_step(ParameterStore& store, Task task,
                 std::span<const double> grads, AdamState& state,
                 const AdamParams& params);

}  // namespace apm
