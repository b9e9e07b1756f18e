#pragma once

#include <cstdint>
#include <vector>

#include "apm/image.hpp"
#include "apm/task.hpp"

namespace apm {

// Atmospheric transfer parameters: received irradiance decomposes into the
// attenuated direct transmission plus scattered airlight,
//   E = E_inf * rho * exp(-beta d) + E_inf * (1 - exp(-beta d)).
struct ScatteringParams {
  double e_inf = 0.9;  // sky intensity, (0, 1]
  double beta = 0.8;   // scattering coefficient, >= 0
  Field2D depth_map;   // optical distance per pixel, >= 0
};

struct RainGeometry {
  int streak_count = 14;  // at intensity 0.5
  double length_px = 12.0;
  double angle_deg = 65.0;
};

struct RaindropGeometry {
  int drop_count = 6;
  double radius_px = 4.0;
  double blur_sigma = 1.6;
};

struct SnowGeometry {
  int flake_count = 30;
  double radius_min_px = 1.0;
  double radius_max_px = 2.6;
};

// Seeded description of one synthetic corruption. Identical specs produce
// bit-identical degraded images.
struct DegradationSpec {
  Task task = Task::Rain;
  std::uint64_t seed = 0;
  ScatteringParams scattering;
  double intensity = 0.5;  // artifact density scale in [0,1]
  RainGeometry rain;
  RaindropGeometry raindrop;
  SnowGeometry snow;
};

// Applies the scattering transform per pixel and channel. clean must be in
// [0,1]; output lies in [0, e_inf].
Image apply_scattering(const Image& clean, const ScatteringParams& p);

struct Scene {
  Image image;    // [3,H,W] in [0,1]
  Field2D depth;  // matching procedural depth
};

// Procedural clean scene: a smooth two-color gradient plus random rectangles
// and soft discs. Depth is a vertical ramp with per-rectangle constant
// overrides, giving the scattering transform spatial structure.
Scene synthesize_scene(std::uint64_t seed, int h, int w);
Image synthesize_clean(std::uint64_t seed, int h, int w);

// Task-specific artifact layer composited over the scattering output:
// rain draws anti-aliased bright streaks, raindrop replaces elliptical
// regions with blurred content plus a specular highlight, snow alpha-blends
// soft bright discs. Result is clamped to [0,1].
Image degrade(const Image& clean, const DegradationSpec& spec);

// Spec with per-task scattering defaults and a procedural depth map matching
// the scene generated from the same seed.
DegradationSpec default_spec(Task task, std::uint64_t seed, int h, int w,
                             double intensity = 0.5);

struct SamplePair {
  Image degraded;
  Image clean;
};

SamplePair make_pair(Task task, std::uint64_t seed, int h, int w,
                     double intensity = 0.5);

// n pairs with per-sample derived seeds (seed + index); fully reproducible.
std::vector<SamplePair> make_dataset(Task task, int n, std::uint64_t seed,
                                     int h, int w, double intensity = 0.5);

// Separable Gaussian blur with edge replication (used by the raindrop
// renderer; exposed for tests).
Image gaussian_blur(const Image& img, double sigma);

}  // namespace apm
