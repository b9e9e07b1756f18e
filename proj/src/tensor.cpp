#include "apm/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace apm {

namespace {

std::atomic<bool> g_nan_guard{false};

std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("tensor: negative dimension");
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

[[noreturn]] void shape_fail(const char* op, const std::string& msg) {
  throw ShapeError(std::string(op) + ": " + msg);
}

void require(bool ok, const char* op, const std::string& msg) {
  if (!ok) shape_fail(op, msg);
}

void require_4d(const Tensor& t, const char* op, const char* what) {
  if (t.shape().size() != 4)
    shape_fail(op, std::string(what) + " must be 4-d, got " + shape_str(t.shape()));
}

bool wants_grad(const TensorImpl& t) {
  return t.requires_grad || t.node != nullptr;
}

void guard_finite(const char* op, const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x))
      throw NumericError(std::string(op) + ": non-finite value in output");
}

// Wraps the result of a forward op. Attaches a backward node only when some
// input participates in gradient tracking, so inference forwards build no
// graph at all.
Tensor make_result(const char* op, std::vector<int> shape,
                   std::vector<double> data,
                   std::vector<std::shared_ptr<TensorImpl>> inputs,
                   std::function<void(Node&, TensorImpl&)> backward) {
  auto out = std::make_shared<TensorImpl>();
  out->shape = std::move(shape);
  out->data = std::move(data);
  if (g_nan_guard.load(std::memory_order_relaxed)) guard_finite(op, out->data);
  bool track = false;
  for (const auto& in : inputs)
    if (wants_grad(*in)) track = true;
  if (track) {
    auto node = std::make_shared<Node>();
    node->op = op;
    node->inputs = std::move(inputs);
    node->output = out;
    node->backward = std::move(backward);
    out->node = std::move(node);
  }
  return Tensor(out);
}

}  // namespace

void set_nan_guard(bool on) { g_nan_guard.store(on); }
bool nan_guard_enabled() { return g_nan_guard.load(); }

// --- Tensor basics ----------------------------------------------------------

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  std::int64_t n = shape_numel(shape);
  impl->shape = std::move(shape);
  impl->data.assign(static_cast<std::size_t>(n), value);
  impl->requires_grad = requires_grad;
  return Tensor(impl);
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data,
                         bool requires_grad) {
  std::int64_t n = shape_numel(shape);
  if (n != static_cast<std::int64_t>(data.size()))
    throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(impl);
}

std::span<double> Tensor::mutable_values() {
  if (impl_->node)
    throw GraphError("tensor: cannot mutate an op output in place");
  return {impl_->data.data(), impl_->data.size()};
}

std::span<const double> Tensor::grad() const {
  if (impl_->grad.empty())
    throw Error("tensor: grad not populated (no backward pass yet)");
  return {impl_->grad.data(), impl_->grad.size()};
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("tensor: item() requires a single element");
  return impl_->data[0];
}

void Tensor::backward() const {
  if (!impl_) throw Error("tensor: backward on undefined tensor");
  if (size() != 1)
    throw GraphError("backward: loss must be a scalar, got shape " +
                     shape_str(impl_->shape));

  // Post-order DFS over node records; the reversed order is the exact
  // reverse topological order of creation.
  std::vector<Node*> order;
  std::unordered_set<const Node*> seen;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  auto push = [&](TensorImpl* t) {
    if (t->node && seen.insert(t->node.get()).second)
      stack.emplace_back(t, 0);
  };
  push(impl_.get());
  while (!stack.empty()) {
    auto& [t, next] = stack.back();
    Node* node = t->node.get();
    if (next < node->inputs.size()) {
      TensorImpl* child = node->inputs[next].get();
      ++next;
      push(child);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order)
    if (n->executed)
      throw GraphError(std::string("backward: graph already consumed (op '") +
                       n->op + "'); run a fresh forward pass");
  for (Node* n : order) n->executed = true;

  impl_->ensure_grad();
  impl_->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    auto out = n->output.lock();
    if (!out) throw GraphError("backward: graph output expired");
    n->backward(*n, *out);
  }
}

// --- conv2d -----------------------------------------------------------------

namespace {

// dst[x] += w0 src[x-1] + w1 src[x] + w2 src[x+1], zero padding at both ends.
inline void add_row_taps(double* __restrict__ dst,
                         const double* __restrict__ src, double w0, double w1,
                         double w2, int W) {
  if (W == 1) {
    dst[0] += w1 * src[0];
    return;
  }
  dst[0] += w1 * src[0] + w2 * src[1];
  for (int x = 1; x < W - 1; ++x)
    dst[x] += w0 * src[x - 1] + w1 * src[x] + w2 * src[x + 1];
  dst[W - 1] += w0 * src[W - 2] + w1 * src[W - 1];
}

// a_k += sum_x g[x] * src[x + k - 1] for the three in-bounds shifts.
inline void dot_row_taps(const double* __restrict__ g,
                         const double* __restrict__ src, double& a0,
                         double& a1, double& a2, int W) {
  if (W == 1) {
    a1 += g[0] * src[0];
    return;
  }
  a1 += g[0] * src[0];
  a2 += g[0] * src[1];
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
  for (int x = 1; x < W - 1; ++x) {
    const double gv = g[x];
    s0 += gv * src[x - 1];
    s1 += gv * src[x];
    s2 += gv * src[x + 1];
  }
  a0 += s0 + g[W - 1] * src[W - 2];
  a1 += s1 + g[W - 1] * src[W - 1];
  a2 += s2;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_4d(input, "conv2d", "input");
  require_4d(weight, "conv2d", "weight");
  const int N = input.dim(0), Ci = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int Co = weight.dim(0);
  require(weight.dim(2) == 3 && weight.dim(3) == 3, "conv2d",
          "kernel must be 3x3, got " + shape_str(weight.shape()));
  require(weight.dim(1) == Ci, "conv2d",
          "weight expects " + std::to_string(weight.dim(1)) +
              " input channels, input has " + std::to_string(Ci));
  require(bias.shape().size() == 1 && bias.dim(0) == Co, "conv2d",
          "bias must be [" + std::to_string(Co) + "], got " +
              shape_str(bias.shape()));

  const double* in = input.values().data();
  const double* w = weight.values().data();
  const double* b = bias.values().data();
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  std::vector<double> out(static_cast<std::size_t>(N) * Co * plane);

  for (int n = 0; n < N; ++n) {
    for (int co = 0; co < Co; ++co) {
      double* op = out.data() + (static_cast<std::size_t>(n) * Co + co) * plane;
      std::fill(op, op + plane, b[co]);
      for (int ci = 0; ci < Ci; ++ci) {
        const double* ip = in + (static_cast<std::size_t>(n) * Ci + ci) * plane;
        const double* wp = w + (static_cast<std::size_t>(co) * Ci + ci) * 9;
        for (int y = 0; y < H; ++y) {
          double* orow = op + static_cast<std::size_t>(y) * W;
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = y + ky - 1;
            if (iy < 0 || iy >= H) continue;
            add_row_taps(orow, ip + static_cast<std::size_t>(iy) * W,
                         wp[ky * 3], wp[ky * 3 + 1], wp[ky * 3 + 2], W);
          }
        }
      }
    }
  }

  auto backward = [N, Ci, Co, H, W, plane](Node& node, TensorImpl& o) {
    TensorImpl& xin = *node.inputs[0];
    TensorImpl& win = *node.inputs[1];
    TensorImpl& bin = *node.inputs[2];
    const double* gout = o.grad.data();
    const double* in = xin.data.data();
    const double* w = win.data.data();

    if (wants_grad(bin)) {
      bin.ensure_grad();
      for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co) {
          const double* gp = gout + (static_cast<std::size_t>(n) * Co + co) * plane;
          double acc = 0.0;
          for (std::size_t i = 0; i < plane; ++i) acc += gp[i];
          bin.grad[co] += acc;
        }
    }
    if (wants_grad(win)) {
      win.ensure_grad();
      for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co) {
          const double* gp = gout + (static_cast<std::size_t>(n) * Co + co) * plane;
          for (int ci = 0; ci < Ci; ++ci) {
            const double* ip = in + (static_cast<std::size_t>(n) * Ci + ci) * plane;
            double* gw = win.grad.data() + (static_cast<std::size_t>(co) * Ci + ci) * 9;
            for (int ky = 0; ky < 3; ++ky) {
              double a0 = 0.0, a1 = 0.0, a2 = 0.0;
              for (int y = 0; y < H; ++y) {
                const int iy = y + ky - 1;
                if (iy < 0 || iy >= H) continue;
                dot_row_taps(gp + static_cast<std::size_t>(y) * W,
                             ip + static_cast<std::size_t>(iy) * W, a0, a1, a2,
                             W);
              }
              gw[ky * 3] += a0;
              gw[ky * 3 + 1] += a1;
              gw[ky * 3 + 2] += a2;
            }
          }
        }
    }
    if (wants_grad(xin)) {
      xin.ensure_grad();
      for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co) {
          const double* gp = gout + (static_cast<std::size_t>(n) * Co + co) * plane;
          for (int ci = 0; ci < Ci; ++ci) {
            double* gi = xin.grad.data() + (static_cast<std::size_t>(n) * Ci + ci) * plane;
            const double* wp = w + (static_cast<std::size_t>(co) * Ci + ci) * 9;
            for (int iy = 0; iy < H; ++iy) {
              double* girow = gi + static_cast<std::size_t>(iy) * W;
              for (int ky = 0; ky < 3; ++ky) {
                const int y = iy - ky + 1;  // output row feeding this input row
                if (y < 0 || y >= H) continue;
                add_row_taps(girow, gp + static_cast<std::size_t>(y) * W,
                             wp[ky * 3 + 2], wp[ky * 3 + 1], wp[ky * 3], W);
              }
            }
          }
        }
    }
  };

  return make_result("conv2d", {N, Co, H, W}, std::move(out),
                     {input.impl(), weight.impl(), bias.impl()}, backward);
}

// --- elementwise / structural ops --------------------------------------------

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  auto backward = [](Node& node, TensorImpl& o) {
    TensorImpl& xin = *node.inputs[0];
    if (!wants_grad(xin)) return;
    xin.ensure_grad();
    const double* gout = o.grad.data();
    const double* in = xin.data.data();
    double* gin = xin.grad.data();
    const std::size_t n = xin.data.size();
    for (std::size_t i = 0; i < n; ++i)
      if (in[i] > 0.0) gin[i] += gout[i];
  };
  return make_result("relu", x.shape(), std::move(out), {x.impl()}, backward);
}

Tensor maxpool2(const Tensor& x) {
  require_4d(x, "maxpool2", "input");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(H % 2 == 0 && W % 2 == 0, "maxpool2",
          "H and W must be even, got " + shape_str(x.shape()));
  const int Ho = H / 2, Wo = W / 2;
  const double* in = x.values().data();
  std::vector<double> out(static_cast<std::size_t>(N) * C * Ho * Wo);
  std::vector<std::int64_t> argmax(out.size());

  std::size_t oi = 0;
  for (int nc = 0; nc < N * C; ++nc) {
    const double* ip = in + static_cast<std::size_t>(nc) * H * W;
    const std::int64_t base = static_cast<std::int64_t>(nc) * H * W;
    for (int y = 0; y < Ho; ++y)
      for (int xo = 0; xo < Wo; ++xo, ++oi) {
        double best = -std::numeric_limits<double>::infinity();
        std::int64_t besti = -1;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const std::int64_t idx = static_cast<std::int64_t>(2 * y + dy) * W + (2 * xo + dx);
            const double v = ip[idx];
            if (v > best) {  // strict: first element wins ties
              best = v;
              besti = idx;
            }
          }
        out[oi] = best;
        argmax[oi] = base + besti;
      }
  }

  auto backward = [argmax = std::move(argmax)](Node& node, TensorImpl& o) {
    TensorImpl& xin = *node.inputs[0];
    if (!wants_grad(xin)) return;
    xin.ensure_grad();
    const double* gout = o.grad.data();
    double* gin = xin.grad.data();
    for (std::size_t i = 0; i < argmax.size(); ++i) gin[argmax[i]] += gout[i];
  };
  return make_result("maxpool2", {N, C, Ho, Wo}, std::move(out), {x.impl()},
                     std::move(backward));
}

Tensor avgpool2(const Tensor& x) {
  require_4d(x, "avgpool2", "input");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(H % 2 == 0 && W % 2 == 0, "avgpool2",
          "H and W must be even, got " + shape_str(x.shape()));
  const int Ho = H / 2, Wo = W / 2;
  const double* in = x.values().data();
  std::vector<double> out(static_cast<std::size_t>(N) * C * Ho * Wo);

  std::size_t oi = 0;
  for (int nc = 0; nc < N * C; ++nc) {
    const double* ip = in + static_cast<std::size_t>(nc) * H * W;
    for (int y = 0; y < Ho; ++y)
      for (int xo = 0; xo < Wo; ++xo, ++oi) {
        const double* r0 = ip + static_cast<std::size_t>(2 * y) * W + 2 * xo;
        const double* r1 = r0 + W;
        out[oi] = 0.25 * (r0[0] + r0[1] + r1[0] + r1[1]);
      }
  }

  auto backward = [N, C, H, W, Ho, Wo](Node& node, TensorImpl& o) {
    TensorImpl& xin = *node.inputs[0];
    if (!wants_grad(xin)) return;
    xin.ensure_grad();
    const double* gout = o.grad.data();
    std::size_t oi = 0;
    for (int nc = 0; nc < N * C; ++nc) {
      double* gp = xin.grad.data() + static_cast<std::size_t>(nc) * H * W;
      for (int y = 0; y < Ho; ++y)
        for (int xo = 0; xo < Wo; ++xo, ++oi) {
          const double g = 0.25 * gout[oi];
          double* r0 = gp + static_cast<std::size_t>(2 * y) * W + 2 * xo;
          double* r1 = r0 + W;
          r0[0] += g; r0[1] += g; r1[0] += g; r1[1] += g;
        }
    }
  };
  return make_result("avgpool2", {N, C, Ho, Wo}, std::move(out), {x.impl()},
                     backward);
}

Tensor upsample_nearest2(const Tensor& x) {
  require_4d(x, "upsample_nearest2", "input");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Ho = 2 * H, Wo = 2 * W;
  const double* in = x.values().data();
  std::vector<double> out(static_cast<std::size_t>(N) * C * Ho * Wo);

  for (int nc = 0; nc < N * C; ++nc) {
    const double* ip = in + static_cast<std::size_t>(nc) * H * W;
    double* op = out.data() + static_cast<std::size_t>(nc) * Ho * Wo;
    for (int y = 0; y < Ho; ++y) {
      const double* irow = ip + static_cast<std::size_t>(y / 2) * W;
      double* orow = op + static_cast<std::size_t>(y) * Wo;
      for (int xo = 0; xo < Wo; ++xo) orow[xo] = irow[xo / 2];
    }
  }

  auto backward = [N, C, H, W, Ho, Wo](Node& node, TensorImpl& o) {
    TensorImpl& xin = *node.inputs[0];
    if (!wants_grad(xin)) return;
    xin.ensure_grad();
    const double* gout = o.grad.data();
    for (int nc = 0; nc < N * C; ++nc) {
      double* gp = xin.grad.data() + static_cast<std::size_t>(nc) * H * W;
      const double* gop = gout + static_cast<std::size_t>(nc) * Ho * Wo;
      for (int y = 0; y < Ho; ++y) {
        double* grow = gp + static_cast<std::size_t>(y / 2) * W;
        const double* gorow = gop + static_cast<std::size_t>(y) * Wo;
        for (int xo = 0; xo < Wo; ++xo) grow[xo / 2] += gorow[xo];
      }
    }
  };
  return make_result("upsample_nearest2", {N, C, Ho, Wo}, std::move(out),
                     {x.impl()}, backward);
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_4d(a, "concat_channels", "first input");
  require_4d(b, "concat_channels", "second input");
  const int N = a.dim(0), Ca = a.dim(1), H = a.dim(2), W = a.dim(3);
  const int Cb = b.dim(1);
  require(b.dim(0) == N && b.dim(2) == H && b.dim(3) == W, "concat_channels",
          "spatial/batch mismatch: " + shape_str(a.shape()) + " vs " +
              shape_str(b.shape()));
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  std::vector<double> out(static_cast<std::size_t>(N) * (Ca + Cb) * plane);
  const double* ap = a.values().data();
  const double* bp = b.values().data();
  for (int n = 0; n < N; ++n) {
    double* op = out.data() + static_cast<std::size_t>(n) * (Ca + Cb) * plane;
    std::copy_n(ap + static_cast<std::size_t>(n) * Ca * plane, Ca * plane, op);
    std::copy_n(bp + static_cast<std::size_t>(n) * Cb * plane, Cb * plane,
                op + Ca * plane);
  }

  auto backward = [N, Ca, Cb, plane](Node& node, TensorImpl& o) {
    TensorImpl& ain = *node.inputs[0];
    TensorImpl& bin = *node.inputs[1];
    const double* gout = o.grad.data();
    if (wants_grad(ain)) {
      ain.ensure_grad();
      for (int n = 0; n < N; ++n) {
        const double* gp = gout + static_cast<std::size_t>(n) * (Ca + Cb) * plane;
        double* ga = ain.grad.data() + static_cast<std::size_t>(n) * Ca * plane;
        for (std::size_t i = 0; i < static_cast<std::size_t>(Ca) * plane; ++i)
          ga[i] += gp[i];
      }
    }
    if (wants_grad(bin)) {
      bin.ensure_grad();
      for (int n = 0; n < N; ++n) {
        const double* gp = gout + static_cast<std::size_t>(n) * (Ca + Cb) * plane + Ca * plane;
        double* gb = bin.grad.data() + static_cast<std::size_t>(n) * Cb * plane;
        for (std::size_t i = 0; i < static_cast<std::size_t>(Cb) * plane; ++i)
          gb[i] += gp[i];
      }
    }
  };
  return make_result("concat_channels", {N, Ca + Cb, H, W}, std::move(out),
                     {a.impl(), b.impl()}, backward);
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    shape_fail(op, "shape mismatch: " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.values().begin(), a.values().end());
  const double* bp = b.values().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bp[i];
  auto backward = [](Node& node, TensorImpl& o) {
    for (int k = 0; k < 2; ++k) {
      TensorImpl& in = *node.inputs[k];
      if (!wants_grad(in)) continue;
      in.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) in.grad[i] += o.grad[i];
    }
  };
  return make_result("add", a.shape(), std::move(out), {a.impl(), b.impl()},
                     backward);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.values().begin(), a.values().end());
  const double* bp = b.values().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bp[i];
  auto backward = [](Node& node, TensorImpl& o) {
    TensorImpl& ain = *node.inputs[0];
    TensorImpl& bin = *node.inputs[1];
    if (wants_grad(ain)) {
      ain.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) ain.grad[i] += o.grad[i];
    }
    if (wants_grad(bin)) {
      bin.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) bin.grad[i] -= o.grad[i];
    }
  };
  return make_result("sub", a.shape(), std::move(out), {a.impl(), b.impl()},
                     backward);
}

Tensor scale(const Tensor& x, double c) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v *= c;
  auto backward = [c](Node& node, TensorImpl& o) {
    TensorImpl& xin = *node.inputs[0];
    if (!wants_grad(xin)) return;
    xin.ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) xin.grad[i] += c * o.grad[i];
  };
  return make_result("scale", x.shape(), std::move(out), {x.impl()}, backward);
}

Tensor mean(const Tensor& x) {
  const std::size_t n = x.values().size();
  require(n > 0, "mean", "input must be non-empty");
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  std::vector<double> out{acc / static_cast<double>(n)};
  auto backward = [n](Node& node, TensorImpl& o) {
    TensorImpl& xin = *node.inputs[0];
    if (!wants_grad(xin)) return;
    xin.ensure_grad();
    const double g = o.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) xin.grad[i] += g;
  };
  return make_result("mean", {1}, std::move(out), {x.impl()}, backward);
}

namespace {
constexpr double kLumaR = 0.299, kLumaG = 0.587, kLumaB = 0.114;
}

Tensor luminance(const Tensor& x) {
  require_4d(x, "luminance", "input");
  const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
  require(x.dim(1) == 3, "luminance",
          "input must have 3 channels, got " + shape_str(x.shape()));
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  const double* in = x.values().data();
  std::vector<double> out(static_cast<std::size_t>(N) * plane);
  for (int n = 0; n < N; ++n) {
    const double* r = in + static_cast<std::size_t>(n) * 3 * plane;
    const double* g = r + plane;
    const double* b = g + plane;
    double* op = out.data() + static_cast<std::size_t>(n) * plane;
    for (std::size_t i = 0; i < plane; ++i)
      op[i] = kLumaR * r[i] + kLumaG * g[i] + kLumaB * b[i];
  }
  auto backward = [N, plane](Node& node, TensorImpl& o) {
    TensorImpl& xin = *node.inputs[0];
    if (!wants_grad(xin)) return;
    xin.ensure_grad();
    const double* gout = o.grad.data();
    for (int n = 0; n < N; ++n) {
      double* gr = xin.grad.data() + static_cast<std::size_t>(n) * 3 * plane;
      double* gg = gr + plane;
      double* gb = gg + plane;
      const double* gp = gout + static_cast<std::size_t>(n) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        gr[i] += kLumaR * gp[i];
        gg[i] += kLumaG * gp[i];
        gb[i] += kLumaB * gp[i];
      }
    }
  };
  return make_result("luminance", {N, 1, H, W}, std::move(out), {x.impl()},
                     backward);
}

Tensor smooth_l1_loss(const Tensor& pred, const Tensor& target, double beta) {
  require_same_shape(pred, target, "smooth_l1_loss");
  if (!(beta > 0.0))
    throw ParamError("smooth_l1_loss: beta must be positive");
  const std::size_t n = pred.values().size();
  require(n > 0, "smooth_l1_loss", "input must be non-empty");
  const double* p = pred.values().data();
  const double* t = target.values().data();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = p[i] - t[i];
    const double a = std::abs(d);
    acc += a < beta ? 0.5 * d * d / beta : a - 0.5 * beta;
  }
  std::vector<double> out{acc / static_cast<double>(n)};
  auto backward = [beta, n](Node& node, TensorImpl& o) {
    TensorImpl& pin = *node.inputs[0];
    TensorImpl& tin = *node.inputs[1];
    const bool gp = wants_grad(pin), gt = wants_grad(tin);
    if (!gp && !gt) return;
    if (gp) pin.ensure_grad();
    if (gt) tin.ensure_grad();
    const double g = o.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = pin.data[i] - tin.data[i];
      const double dd = std::abs(d) < beta ? d / beta : (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
      if (gp) pin.grad[i] += g * dd;
      if (gt) tin.grad[i] -= g * dd;
    }
  };
  return make_result("smooth_l1_loss", {1}, std::move(out),
                     {pred.impl(), target.impl()}, backward);
}

Tensor l1_loss(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "l1_loss");
  const std::size_t n = a.values().size();
  require(n > 0, "l1_loss", "input must be non-empty");
  const double* p = a.values().data();
  const double* t = b.values().data();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(p[i] - t[i]);
  std::vector<double> out{acc / static_cast<double>(n)};
  auto backward = [n](Node& node, TensorImpl& o) {
    TensorImpl& ain = *node.inputs[0];
    TensorImpl& bin = *node.inputs[1];
    const bool ga = wants_grad(ain), gb = wants_grad(bin);
    if (!ga && !gb) return;
    if (ga) ain.ensure_grad();
    if (gb) bin.ensure_grad();
    const double g = o.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = ain.data[i] - bin.data[i];
      const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      if (ga) ain.grad[i] += g * s;
      if (gb) bin.grad[i] -= g * s;
    }
  };
  return make_result("l1_loss", {1}, std::move(out), {a.impl(), b.impl()},
                     backward);
}

}  // namespace apm
