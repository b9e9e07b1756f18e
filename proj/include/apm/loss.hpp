#pragma once

#include "apm/tensor.hpp"

namespace apm {

struct LossConfig {
  double lambda_depth = 0.1;   // weight of the depth-consistency term
  double smooth_l1_beta = 1.0; // Huber transition point
  int pseudo_depth_levels = 3;
};

struct Batch {
  Tensor input;   // [N,3,H,W] degraded
  Tensor target;  // [N,3,H,W] clean
};

// Deterministic stand-in for a learned depth estimator: luminance followed by
// `levels` rounds of 2x2 average pooling. Parameter-free and differentiable.
// [N,3,H,W] -> [N,1,H/2^levels,W/2^levels].
Tensor pseudo_depth(const Tensor& img, int levels);

// smooth_l1(pred, target) + lambda_depth * mean|D(pred) - D(target)|.
// The depth term is skipped entirely when lambda_depth == 0, so the reduction
// to plain smooth L1 is exact.
Tensor total_loss(const Tensor& pred, const Tensor& target,
                  const LossConfig& cfg);

}  // namespace apm
