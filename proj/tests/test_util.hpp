#pragma once

// Shared helpers for the test suites: independent brute-force oracles and a
// finite-difference gradient checker. Nothing here may call back into the
// implementation paths it is used to verify.

#include <cmath>
#include <functional>
#include <vector>

#include "apm/rng.hpp"
#include "apm/tensor.hpp"

namespace testutil {

inline double rel_err(double a, double b, double floor = 1e-12) {
  const double denom = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / denom;
}

inline std::vector<double> random_vec(apm::Rng& rng, std::size_t n,
                                      double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Central finite differences of a scalar-valued forward function with respect
// to one leaf tensor. `forward` must rebuild the graph from the leaf's current
// values on every call and return the loss value.
inline std::vector<double> fd_gradient(apm::Tensor leaf,
                                       const std::function<double()>& forward,
                                       double h = 1e-5) {
  auto vals = leaf.mutable_values();
  std::vector<double> g(vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double saved = vals[i];
    vals[i] = saved + h;
    const double fp = forward();
    vals[i] = saved - h;
    const double fm = forward();
    vals[i] = saved;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Reference 3x3 / stride 1 / zero-pad 1 cross-correlation, written as the
// literal sextuple loop. Deliberately shares no code with apm::conv2d.
struct NaiveConv {
  int N, Ci, Co, H, W;

  std::vector<double> forward(const std::vector<double>& in,
                              const std::vector<double>& w,
                              const std::vector<double>& b) const {
    std::vector<double> out(static_cast<std::size_t>(N) * Co * H * W, 0.0);
    for (int n = 0; n < N; ++n)
      for (int co = 0; co < Co; ++co)
        for (int y = 0; y < H; ++y)
          for (int x = 0; x < W; ++x) {
            double acc = b[co];
            for (int ci = 0; ci < Ci; ++ci)
              for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                  const int iy = y + ky - 1, ix = x + kx - 1;
                  if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                  acc += w[((co * Ci + ci) * 3 + ky) * 3 + kx] *
                         in[((n * Ci + ci) * H + iy) * W + ix];
                }
            out[((n * Co + co) * H + y) * W + x] = acc;
          }
    return out;
  }

  void backward(const std::vector<double>& in, const std::vector<double>& w,
                const std::vector<double>& gout, std::vector<double>& gin,
                std::vector<double>& gw, std::vector<double>& gb) const {
    gin.assign(in.size(), 0.0);
    gw.assign(w.size(), 0.0);
    gb.assign(static_cast<std::size_t>(Co), 0.0);
    for (int n = 0; n < N; ++n)
      for (int co = 0; co < Co; ++co)
        for (int y = 0; y < H; ++y)
          for (int x = 0; x < W; ++x) {
            const double g = gout[((n * Co + co) * H + y) * W + x];
            gb[co] += g;
            for (int ci = 0; ci < Ci; ++ci)
              for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                  const int iy = y + ky - 1, ix = x + kx - 1;
                  if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                  gw[((co * Ci + ci) * 3 + ky) * 3 + kx] +=
                      g * in[((n * Ci + ci) * H + iy) * W + ix];
                  gin[((n * Ci + ci) * H + iy) * W + ix] +=
                      g * w[((co * Ci + ci) * 3 + ky) * 3 + kx];
                }
          }
  }
};

}  // namespace testutil
