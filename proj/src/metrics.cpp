#include "apm/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "apm/errors.hpp"

namespace apm {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": image shapes differ");
}

std::vector<double> to_luminance(const Image& img) {
  const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
  std::vector<double> lum(plane);
  if (img.channels == 3) {
    for (std::size_t i = 0; i < plane; ++i)
      lum[i] = 0.299 * img.data[i] + 0.587 * img.data[plane + i] +
               0.114 * img.data[2 * plane + i];
  } else if (img.channels == 1) {
    for (std::size_t i = 0; i < plane; ++i) lum[i] = img.data[i];
  } else {
    throw ShapeError("ssim: expected 1 or 3 channels");
  }
  return lum;
}

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;  // (K1 L)^2
constexpr double kC2 = 0.03 * 0.03;  // (K2 L)^2

std::vector<double> gaussian_kernel() {
  std::vector<double> k(kWindow);
  const int half = kWindow / 2;
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - half;
    k[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable valid-extent filtering: rows first, then columns.
std::vector<double> filter_valid(const std::vector<double>& in, int h, int w,
                                 const std::vector<double>& k) {
  const int hw = static_cast<int>(k.size());
  const int wo = w - hw + 1, ho = h - hw + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * wo);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < wo; ++x) {
      double acc = 0.0;
      for (int i = 0; i < hw; ++i) acc += k[i] * in[static_cast<std::size_t>(y) * w + x + i];
      rows[static_cast<std::size_t>(y) * wo + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(ho) * wo);
  for (int y = 0; y < ho; ++y)
    for (int x = 0; x < wo; ++x) {
      double acc = 0.0;
      for (int i = 0; i < hw; ++i) acc += k[i] * rows[static_cast<std::size_t>(y + i) * wo + x];
      out[static_cast<std::size_t>(y) * wo + x] = acc;
    }
  return out;
}

void format_metric(char* buf, std::size_t n, const char* fmt, double v) {
  if (std::isinf(v))
    std::snprintf(buf, n, "inf");
  else
    std::snprintf(buf, n, fmt, v);
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  require_same_shape(a, b, "psnr");
  if (a.size() == 0) throw ShapeError("psnr: empty image");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double av = std::clamp(a.data[i], 0.0, 1.0);
    const double bv = std::clamp(b.data[i], 0.0, 1.0);
    const double d = av - bv;
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& a, const Image& b) {
  require_same_shape(a, b, "ssim");
  if (a.height < kWindow || a.width < kWindow)
    throw ShapeError("ssim: images must be at least 11x11");

  const auto la = to_luminance(a);
  const auto lb = to_luminance(b);
  const int h = a.height, w = a.width;
  const auto k = gaussian_kernel();

  const std::size_t n = la.size();
  std::vector<double> aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = la[i] * la[i];
    bb[i] = lb[i] * lb[i];
    ab[i] = la[i] * lb[i];
  }

  const auto mu_a = filter_valid(la, h, w, k);
  const auto mu_b = filter_valid(lb, h, w, k);
  const auto s_aa = filter_valid(aa, h, w, k);
  const auto s_bb = filter_valid(bb, h, w, k);
  const auto s_ab = filter_valid(ab, h, w, k);

  double acc = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = s_aa[i] - ma * ma;
    const double vb = s_bb[i] - mb * mb;
    const double cov = s_ab[i] - ma * mb;
    acc += ((2.0 * ma * mb + kC1) * (2.0 * cov + kC2)) /
           ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
  }
  return acc / static_cast<double>(mu_a.size());
}

double EvalReport::mean_psnr() const {
  double acc = 0.0;
  for (const auto& r : rows) acc += r.psnr_db;
  return rows.empty() ? 0.0 : acc / static_cast<double>(rows.size());
}

double EvalReport::mean_ssim() const {
  double acc = 0.0;
  for (const auto& r : rows) acc += r.ssim;
  return rows.empty() ? 0.0 : acc / static_cast<double>(rows.size());
}

void EvalReport::write_csv(std::ostream& os) const {
  os << "task,image_id,psnr_db,ssim\n";
  char pbuf[64], sbuf[64];
  for (const auto& r : rows) {
    format_metric(pbuf, sizeof pbuf, "%.4f", r.psnr_db);
    format_metric(sbuf, sizeof sbuf, "%.6f", r.ssim);
    os << to_string(task) << ',' << r.image_id << ',' << pbuf << ',' << sbuf
       << '\n';
  }
  format_metric(pbuf, sizeof pbuf, "%.4f", mean_psnr());
  format_metric(sbuf, sizeof sbuf, "%.6f", mean_ssim());
  os << to_string(task) << ",mean," << pbuf << ',' << sbuf << '\n';
}

}  // namespace apm
