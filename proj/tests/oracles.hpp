#pragma once

// Independent reference implementations used by the unit and acceptance
// tests.

#include "splat/codec.hpp"
#include "splat/image.hpp"
#include "splat/rasterizer.hpp"
#include "splat/scene.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace oracle {

using namespace splat;

// Random cloud in a cube of half-size `spread` around the origin with
// unnormalized quaternions.
GaussianCloud random_cloud(std::mt19937_64& rng, size_t n, int degree, double spread = 0.6,
                           double min_scale = 0.05, double max_scale = 0.3);

// Camera looking at the origin from distance `dist` along a random
// direction.
Camera random_camera(std::mt19937_64& rng, int w, int h, double dist = 3.0, double fov_deg = 45.0);

Image random_image(std::mt19937_64& rng, int w, int h, double lo = 0.0, double hi = 1.0);

// Per-pixel loop over all Gaussians in a global (depth, index) order.
struct NaiveRender {
  Image image;
  std::vector<double> alpha;
  std::vector<std::vector<uint32_t>> contributors;
};
NaiveRender naive_render(const GaussianCloud& cloud, const Camera& cam);

// Real SH basis from the explicit polynomial table.
std::vector<double> sh_table(const Vec3& d, int degree);

// Central finite-difference check of rasterize_backward with
// L = sum(dL .* image). Steps 1e-4, 1e-5, 1e-6 are tried in turn; a step
// is usable only when neither perturbed render changes the compositing
// decisions (contributor lists, alpha and color clamps). Coordinates with
// no usable step are excluded and counted.
struct FdReport {
  size_t checked = 0;
  size_t excluded = 0;
  size_t failures = 0;
  double worst_rel = 0;
  std::vector<std::string> messages;
};
FdReport fd_check(const GaussianCloud& cloud, const Camera& cam, const Image& dL, double rel_tol,
                  double abs_tol);

// Brute-force 4x4 homogeneous projection.
Vec2 project_homogeneous(const Vec3& p, const Camera& cam);

double naive_mse(const Image& a, const Image& b);

// SSIM with a direct 11x11 window sum per pixel, image zero-padded.
double naive_ssim(const Image& a, const Image& b);

// Scalar-loop Adam with bias correction.
struct ScalarAdam {
  double m = 0, v = 0;
  int t = 0;
  double step(double x, double g, double lr, double b1 = 0.9, double b2 = 0.999, double eps = 1e-15);
};

// Symbol sequences of length 0..400 drawn from one of four shapes: all
// zero, signed geometric, full int32 range, small uniform.
std::vector<int32_t> random_symbols(std::mt19937_64& rng);

// Frame-3 residual set over n Gaussians mixing none / quantized / raw
// attributes, sparse positions, every fifth row removed and 4 additions.
ResidualSet random_residuals(std::mt19937_64& rng, uint32_t n, int degree);

} // namespace oracle
