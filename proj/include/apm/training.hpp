#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "apm/loss.hpp"
#include "apm/mask.hpp"
#include "apm/metrics.hpp"
#include "apm/unet.hpp"
#include "apm/weather.hpp"

namespace apm {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 8;
  double lr = 1e-4;
  std::uint64_t seed = 7;
  int image_h = 32;
  int image_w = 32;
  int samples_per_task = 200;
};

void validate(const TrainConfig& train_cfg, const UNetConfig& model_cfg);

// Invoked once per (epoch, task) with the mean loss over that task's batches.
using EpochCallback = std::function<void(int epoch, Task task, double loss)>;

// Derived dataset seeds, one stream per task, disjoint from calibration and
// evaluation streams.
std::uint64_t task_data_seed(std::uint64_t seed, Task task);
std::uint64_t calibration_seed(std::uint64_t seed, Task task);

// --- tensor/image plumbing ---------------------------------------------------

Tensor image_to_tensor(const Image& img);            // [1,C,H,W]
Image tensor_to_image(const Tensor& t);              // requires N == 1
Batch make_batch(const std::vector<SamplePair>& pairs, std::size_t begin,
                 std::size_t count);

// Single-image inference with the given flat parameters (output not clamped).
Image restore_image(const UNet& net, std::span<const double> params,
                    const Image& degraded);

// --- pipeline stages ----------------------------------------------------------

// Joint pre-training of all parameters on a strict round-robin mixture of the
// three tasks' synthetic datasets. Returns a store holding only the trained
// base. Aborts with NumericError if the loss becomes non-finite.
ParameterStore pretrain_base(const UNetConfig& model_cfg,
                             const TrainConfig& train_cfg,
                             const LossConfig& loss_cfg,
                             const EpochCallback& on_epoch = nullptr);

// Accumulates `batches` calibration batches into a fresh profile for the
// task, evaluated on the frozen base parameters.
GradientProfile profile_task_gradients(const ParameterStore& store,
                                       const UNet& net, Task task,
                                       const TrainConfig& train_cfg,
                                       const LossConfig& loss_cfg,
                                       int batches);

// Masked fine-tuning: only the task's override values change; the base vector
// and every other task's state are untouched.
void finetune_task(ParameterStore& store, Task task,
                   const UNetConfig& model_cfg, const TrainConfig& train_cfg,
                   const LossConfig& loss_cfg,
                   const EpochCallback& on_epoch = nullptr);

// --- gradient verification -----------------------------------------------------

struct GradcheckResult {
  std::size_t checked = 0;
  double max_rel_err = 0.0;
  int retried = 0;  // probes that needed a smaller step near relu/pool kinks

  bool passed(double tol = 1e-4) const { return max_rel_err <= tol; }
};

// Central finite differences (h=1e-5) against the analytic gradients of the
// full network + composite loss, over a random sample of parameter indices.
// Probes that land within h of a relu/maxpool kink are re-run with smaller
// steps before counting as failures.
GradcheckResult run_gradcheck(const UNetConfig& model_cfg,
                              const LossConfig& loss_cfg,
                              double sample_fraction, std::uint64_t seed);

// --- evaluation ----------------------------------------------------------------

enum class EvalMode { Degraded, Base, Masked };

const char* to_string(EvalMode mode);

// PSNR/SSIM over a held-out synthetic set. Degraded scores the corrupted
// input itself; Base runs the network with base parameters; Masked merges the
// task's overrides first. Network outputs are clamped to [0,1] for metrics.
EvalReport evaluate(const ParameterStore& store, Task task, EvalMode mode,
                    const UNetConfig& model_cfg, int n, std::uint64_t seed,
                    int h, int w);

}  // namespace apm
