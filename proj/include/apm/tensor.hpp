#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "apm/errors.hpp"

namespace apm {

struct TensorImpl;

// One record of the backward graph. Built define-by-run during the forward
// pass; the list of records reachable from a loss IS the graph, already in
// topological creation order. A record is consumed by the first backward
// traversal that visits it.
struct Node {
  const char* op = "?";
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::weak_ptr<TensorImpl> output;
  std::function<void(Node&, TensorImpl&)> backward;
  bool executed = false;
};

struct TensorImpl {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first needed; same length as data
  bool requires_grad = false;
  std::shared_ptr<Node> node;  // null for leaves

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

// Value-semantic handle onto a dense f64 tensor participating in a
// reverse-mode autodiff graph. Copies share storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value,
                     bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const { return impl_->shape; }
  int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return impl_->size(); }

  std::span<const double> values() const {
    return {impl_->data.data(), impl_->data.size()};
  }
  // Leaf tensors only; mutating an op output would desynchronize the graph.
  std::span<double> mutable_values();

  bool requires_grad() const { return impl_->requires_grad; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const;
  void zero_grad();

  // Value of a single-element tensor.
  double item() const;

  // Reverse-mode sweep from a scalar output. Populates grad buffers of every
  // reachable tensor that requires one; leaf grads accumulate across calls.
  void backward() const;

  std::shared_ptr<TensorImpl> impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// --- forward operations ---------------------------------------------------

// 3x3 cross-correlation, stride 1, zero padding 1.
// input [N,Cin,H,W], weight [Cout,Cin,3,3], bias [Cout] -> [N,Cout,H,W]
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor relu(const Tensor& x);

// 2x2 non-overlapping max pool; ties go to the first element in row-major
// window order. H and W must be even.
Tensor maxpool2(const Tensor& x);

// 2x2 non-overlapping average pool. H and W must be even.
Tensor avgpool2(const Tensor& x);

// Nearest-neighbour 2x upsampling: each pixel becomes a 2x2 block.
Tensor upsample_nearest2(const Tensor& x);

// Channel stacking a-then-b; N, H, W must match.
Tensor concat_channels(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);

// Mean over all elements; returns a scalar (shape [1]).
Tensor mean(const Tensor& x);

// [N,3,H,W] -> [N,1,H,W], fixed weights 0.299 R + 0.587 G + 0.114 B.
Tensor luminance(const Tensor& x);

// Mean over elements of the Huber penalty with transition `beta`:
// 0.5 d^2 / beta for |d| < beta, |d| - 0.5 beta otherwise, d = pred - target.
Tensor smooth_l1_loss(const Tensor& pred, const Tensor& target, double beta);

// Mean absolute difference; subgradient 0 where the difference is exactly 0.
Tensor l1_loss(const Tensor& a, const Tensor& b);

// --- numeric guard ----------------------------------------------------------

// When enabled, every op validates its output for NaN/Inf and throws
// NumericError on violation. Off by default (hot-path cost).
void set_nan_guard(bool on);
bool nan_guard_enabled();

}  // namespace apm
