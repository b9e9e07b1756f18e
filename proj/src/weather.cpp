#include "apm/weather.hpp"

#include <algorithm>
#include <cmath>

#include "apm/errors.hpp"
#include "apm/rng.hpp"

namespace apm {

namespace {

constexpr std::uint64_t kSceneSalt = 0x5ce9e;
constexpr std::uint64_t kArtifactSalt = 0xa97f;

void validate_scattering(const ScatteringParams& p, int h, int w) {
  if (!(p.e_inf > 0.0) || p.e_inf > 1.0)
    throw ParamError("scattering: e_inf must be in (0,1]");
  if (!(p.beta >= 0.0)) throw ParamError("scattering: beta must be >= 0");
  if (p.depth_map.height != h || p.depth_map.width != w)
    throw ParamError("scattering: depth map shape does not match image");
  for (double d : p.depth_map.data) {
    if (!(d >= 0.0)) throw ParamError("scattering: depth values must be >= 0");
    if (!std::isfinite(d)) throw ParamError("scattering: depth values must be finite");
  }
}

double lerp(double a, double b, double t) { return a + (b - a) * t; }

}  // namespace

Image apply_scattering(const Image& clean, const ScatteringParams& p) {
  if (clean.channels != 3)
    throw ParamError("scattering: expected a 3-channel image");
  validate_scattering(p, clean.height, clean.width);

  const int h = clean.height, w = clean.width;
  Image out(3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double t = std::exp(-p.beta * p.depth_map.at(y, x));
      for (int c = 0; c < 3; ++c) {
        const double rho = clean.at(c, y, x);
        // Algebraically E_inf*(rho*t + 1 - t); the two branches keep the
        // d=0 ("E = E_inf rho") and rho=1 ("E = E_inf") identities exact.
        out.at(c, y, x) =
            t == 1.0 ? p.e_inf * rho : p.e_inf * (1.0 - t * (1.0 - rho));
      }
    }
  return out;
}

Scene synthesize_scene(std::uint64_t seed, int h, int w) {
  if (h < 8 || w < 8) throw ParamError("synthesize: size must be at least 8x8");
  Rng rng(mix_seed(seed, kSceneSalt));
  Scene scene;
  scene.image = Image(3, h, w);
  scene.depth = Field2D(h, w);

  // background: gradient between two colors along a random direction
  double c0[3], c1[3];
  for (double& v : c0) v = rng.uniform(0.05, 0.95);
  for (double& v : c1) v = rng.uniform(0.05, 0.95);
  const double theta = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  const double gx = std::cos(theta), gy = std::sin(theta);
  const double span = std::abs(gx) + std::abs(gy);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double px = w > 1 ? static_cast<double>(x) / (w - 1) - 0.5 : 0.0;
      const double py = h > 1 ? static_cast<double>(y) / (h - 1) - 0.5 : 0.0;
      const double t = 0.5 + (px * gx + py * gy) / span;
      for (int c = 0; c < 3; ++c) scene.image.at(c, y, x) = lerp(c0[c], c1[c], t);
      scene.depth.at(y, x) = h > 1 ? static_cast<double>(y) / (h - 1) : 0.0;
    }

  // rectangles carry their own constant depth
  const int nrect = 3 + static_cast<int>(rng.below(4));
  for (int k = 0; k < nrect; ++k) {
    const int rw = std::max(1, static_cast<int>(rng.uniform(0.15, 0.5) * w));
    const int rh = std::max(1, static_cast<int>(rng.uniform(0.15, 0.5) * h));
    const int x0 = static_cast<int>(rng.below(static_cast<std::uint32_t>(w - rw + 1)));
    const int y0 = static_cast<int>(rng.below(static_cast<std::uint32_t>(h - rh + 1)));
    double color[3];
    for (double& v : color) v = rng.uniform(0.05, 0.95);
    const double rect_depth = rng.uniform(0.0, 1.0);
    for (int y = y0; y < y0 + rh; ++y)
      for (int x = x0; x < x0 + rw; ++x) {
        for (int c = 0; c < 3; ++c) scene.image.at(c, y, x) = color[c];
        scene.depth.at(y, x) = rect_depth;
      }
  }

  // soft discs on the image only
  const int ndisc = 2 + static_cast<int>(rng.below(3));
  for (int k = 0; k < ndisc; ++k) {
    const double cx = rng.uniform(0.0, w);
    const double cy = rng.uniform(0.0, h);
    const double r = rng.uniform(0.06, 0.2) * std::min(h, w);
    double color[3];
    for (double& v : color) v = rng.uniform(0.05, 0.95);
    const int bx0 = std::max(0, static_cast<int>(cx - r - 1));
    const int bx1 = std::min(w - 1, static_cast<int>(cx + r + 1));
    const int by0 = std::max(0, static_cast<int>(cy - r - 1));
    const int by1 = std::min(h - 1, static_cast<int>(cy + r + 1));
    for (int y = by0; y <= by1; ++y)
      for (int x = bx0; x <= bx1; ++x) {
        const double dist = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
        const double a = std::clamp(r + 0.5 - dist, 0.0, 1.0);
        if (a <= 0.0) continue;
        for (int c = 0; c < 3; ++c)
          scene.image.at(c, y, x) = lerp(scene.image.at(c, y, x), color[c], a);
      }
  }
  return scene;
}

Image synthesize_clean(std::uint64_t seed, int h, int w) {
  return synthesize_scene(seed, h, w).image;
}

Image gaussian_blur(const Image& img, double sigma) {
  if (!(sigma > 0.0)) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& v : kernel) v /= sum;

  const int h = img.height, w = img.width;
  Image tmp(img.channels, h, w), out(img.channels, h, w);
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += kernel[i + radius] * img.at(c, y, std::clamp(x + i, 0, w - 1));
        tmp.at(c, y, x) = acc;
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += kernel[i + radius] * tmp.at(c, std::clamp(y + i, 0, h - 1), x);
        out.at(c, y, x) = acc;
      }
  }
  return out;
}

namespace {

int scaled_count(int base_count, double intensity) {
  return static_cast<int>(std::lround(base_count * 2.0 * intensity));
}

void render_rain(Image& out, const DegradationSpec& spec, Rng& rng) {
  const int h = out.height, w = out.width;
  const int count = scaled_count(spec.rain.streak_count, spec.intensity);
  for (int k = 0; k < count; ++k) {
    const double cx = rng.uniform(0.0, w);
    const double cy = rng.uniform(0.0, h);
    const double len = spec.rain.length_px * rng.uniform(0.7, 1.3);
    const double ang =
        (spec.rain.angle_deg + rng.uniform(-5.0, 5.0)) * 3.14159265358979323846 / 180.0;
    const double dx = std::cos(ang), dy = std::sin(ang);
    const double x0 = cx - 0.5 * len * dx, y0 = cy - 0.5 * len * dy;
    const double x1 = cx + 0.5 * len * dx, y1 = cy + 0.5 * len * dy;
    const double bright = rng.uniform(0.75, 0.95);

    const int bx0 = std::max(0, static_cast<int>(std::min(x0, x1)) - 2);
    const int bx1 = std::min(w - 1, static_cast<int>(std::max(x0, x1)) + 2);
    const int by0 = std::max(0, static_cast<int>(std::min(y0, y1)) - 2);
    const int by1 = std::min(h - 1, static_cast<int>(std::max(y0, y1)) + 2);
    const double seg_len2 = len * len;
    for (int y = by0; y <= by1; ++y)
      for (int x = bx0; x <= bx1; ++x) {
        // perpendicular distance to the segment
        const double px = x + 0.5 - x0, py = y + 0.5 - y0;
        const double t = seg_len2 > 0.0
                             ? std::clamp((px * (x1 - x0) + py * (y1 - y0)) / seg_len2, 0.0, 1.0)
                             : 0.0;
        const double qx = x0 + t * (x1 - x0) - (x + 0.5);
        const double qy = y0 + t * (y1 - y0) - (y + 0.5);
        const double dist = std::hypot(qx, qy);
        const double cover = std::clamp(1.2 - dist, 0.0, 1.0);
        if (cover <= 0.0) continue;
        const double a = 0.55 * cover;
        for (int c = 0; c < 3; ++c)
          out.at(c, y, x) = lerp(out.at(c, y, x), bright, a);
      }
  }
}

void render_raindrop(Image& out, const DegradationSpec& spec, Rng& rng) {
  const int h = out.height, w = out.width;
  const int count = scaled_count(spec.raindrop.drop_count, spec.intensity);
  if (count == 0) return;
  const Image blurred = gaussian_blur(out, spec.raindrop.blur_sigma);
  for (int k = 0; k < count; ++k) {
    const double cx = rng.uniform(0.0, w);
    const double cy = rng.uniform(0.0, h);
    const double rx = spec.raindrop.radius_px * rng.uniform(0.75, 1.3);
    const double ry = rx * rng.uniform(0.7, 1.1);

    const int bx0 = std::max(0, static_cast<int>(cx - rx - 1));
    const int bx1 = std::min(w - 1, static_cast<int>(cx + rx + 1));
    const int by0 = std::max(0, static_cast<int>(cy - ry - 1));
    const int by1 = std::min(h - 1, static_cast<int>(cy + ry + 1));
    for (int y = by0; y <= by1; ++y)
      for (int x = bx0; x <= bx1; ++x) {
        const double nx = (x + 0.5 - cx) / rx, ny = (y + 0.5 - cy) / ry;
        const double q = nx * nx + ny * ny;
        if (q >= 1.0) continue;
        const double a = std::clamp((1.0 - q) * 4.0, 0.0, 1.0);
        for (int c = 0; c < 3; ++c)
          out.at(c, y, x) = lerp(out.at(c, y, x), 0.92 * blurred.at(c, y, x) + 0.02, a);
      }

    // specular highlight toward the upper-left of the drop
    const double scx = cx - 0.35 * rx, scy = cy - 0.35 * ry;
    const double sr = 0.28 * rx;
    const int sx0 = std::max(0, static_cast<int>(scx - sr - 1));
    const int sx1 = std::min(w - 1, static_cast<int>(scx + sr + 1));
    const int sy0 = std::max(0, static_cast<int>(scy - sr - 1));
    const int sy1 = std::min(h - 1, static_cast<int>(scy + sr + 1));
    for (int y = sy0; y <= sy1; ++y)
      for (int x = sx0; x <= sx1; ++x) {
        const double ddx = x + 0.5 - scx, ddy = y + 0.5 - scy;
        const double qs = (ddx * ddx + ddy * ddy) / (sr * sr);
        if (qs >= 1.0) continue;
        const double a = 0.7 * (1.0 - qs);
        for (int c = 0; c < 3; ++c) out.at(c, y, x) = lerp(out.at(c, y, x), 1.0, a);
      }
  }
}

void render_snow(Image& out, const DegradationSpec& spec, Rng& rng) {
  const int h = out.height, w = out.width;
  const int count = scaled_count(spec.snow.flake_count, spec.intensity);
  for (int k = 0; k < count; ++k) {
    const double cx = rng.uniform(0.0, w);
    const double cy = rng.uniform(0.0, h);
    const double r =
        rng.uniform(spec.snow.radius_min_px, spec.snow.radius_max_px);
    const int bx0 = std::max(0, static_cast<int>(cx - r - 1));
    const int bx1 = std::min(w - 1, static_cast<int>(cx + r + 1));
    const int by0 = std::max(0, static_cast<int>(cy - r - 1));
    const int by1 = std::min(h - 1, static_cast<int>(cy + r + 1));
    for (int y = by0; y <= by1; ++y)
      for (int x = bx0; x <= bx1; ++x) {
        const double ddx = x + 0.5 - cx, ddy = y + 0.5 - cy;
        const double q = (ddx * ddx + ddy * ddy) / (r * r);
        if (q >= 1.0) continue;
        const double a = 0.85 * (1.0 - q);
        for (int c = 0; c < 3; ++c) out.at(c, y, x) = lerp(out.at(c, y, x), 0.97, a);
      }
  }
}

}  // namespace

Image degrade(const Image& clean, const DegradationSpec& spec) {
  if (spec.intensity < 0.0 || spec.intensity > 1.0)
    throw ParamError("degrade: intensity must be in [0,1]");
  switch (spec.task) {
    case Task::Rain:
    case Task::Raindrop:
    case Task::Snow:
      break;
    default:
      throw Error("degrade: unknown task enum value " +
                  std::to_string(static_cast<int>(spec.task)));
  }

  Image out = apply_scattering(clean, spec.scattering);
  Rng rng(mix_seed(spec.seed, kArtifactSalt + static_cast<int>(spec.task)));
  switch (spec.task) {
    case Task::Rain: render_rain(out, spec, rng); break;
    case Task::Raindrop: render_raindrop(out, spec, rng); break;
    case Task::Snow: render_snow(out, spec, rng); break;
  }
  return clamp01(std::move(out));
}

namespace {

// Per-task atmospheres: distinct sky intensity and haze density give each
// scenario its own global appearance.
void set_task_atmosphere(DegradationSpec& spec, Task task) {
  switch (task) {
    case Task::Rain:
      spec.scattering.e_inf = 0.80;
      spec.scattering.beta = 1.1;
      break;
    case Task::Raindrop:
      spec.scattering.e_inf = 0.92;
      spec.scattering.beta = 0.45;
      break;
    case Task::Snow:
      spec.scattering.e_inf = 0.97;
      spec.scattering.beta = 0.8;
      break;
  }
}

}  // namespace

DegradationSpec default_spec(Task task, std::uint64_t seed, int h, int w,
                             double intensity) {
  DegradationSpec spec;
  spec.task = task;
  spec.seed = seed;
  spec.intensity = intensity;
  spec.scattering.depth_map = synthesize_scene(seed, h, w).depth;
  set_task_atmosphere(spec, task);
  return spec;
}

SamplePair make_pair(Task task, std::uint64_t seed, int h, int w,
                     double intensity) {
  Scene scene = synthesize_scene(seed, h, w);
  DegradationSpec spec;
  spec.task = task;
  spec.seed = seed;
  spec.intensity = intensity;
  spec.scattering.depth_map = std::move(scene.depth);
  set_task_atmosphere(spec, task);
  SamplePair pair;
  pair.degraded = degrade(scene.image, spec);
  pair.clean = std::move(scene.image);
  return pair;
}

std::vector<SamplePair> make_dataset(Task task, int n, std::uint64_t seed,
                                     int h, int w, double intensity) {
  if (n < 1) throw ParamError("make_dataset: n must be >= 1");
  std::vector<SamplePair> pairs;
  pairs.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    pairs.push_back(
        make_pair(task, seed + static_cast<std::uint64_t>(i), h, w, intensity));
  return pairs;
}

}  // namespace apm
