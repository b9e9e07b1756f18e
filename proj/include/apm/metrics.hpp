#pragma once

#include <iosfwd>
#include <vector>

#include "apm/image.hpp"
#include "apm/task.hpp"

namespace apm {

// Peak signal-to-noise ratio in dB over [0,1] dynamic range. Both images are
// clamped to [0,1] before comparison; identical images return +infinity.
double psnr(const Image& a, const Image& b);

// Structural similarity on the luminance plane: 11x11 Gaussian window with
// sigma 1.5, K1=0.01, K2=0.03, L=1, averaged over valid (fully inside) window
// positions. Images must be at least 11x11.
double ssim(const Image& a, const Image& b);

struct EvalRow {
  int image_id;
  double psnr_db;
  double ssim;
};

struct EvalReport {
  Task task = Task::Rain;
  std::vector<EvalRow> rows;

  double mean_psnr() const;
  double mean_ssim() const;

  // CSV: header `task,image_id,psnr_db,ssim`, one row per image, then a
  // summary row with image_id "mean".
  void write_csv(std::ostream& os) const;
};

}  // namespace apm
