#pragma once

#include "splat/image.hpp"
#include "splat/scene.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace splat {

struct RasterSettings {
  int tile_size = 16;
  double alpha_min = 1.0 / 255.0;   // per-pixel contributions below this are skipped
  double alpha_max = 0.99;
  double transmittance_min = 1e-4; // compositing stops once T would drop below
  double covariance_floor = kCovarianceFloor;
  double extent_sigma = 3.0;       // screen-space footprint half-width in std devs
};

// Screen-space record of one Gaussian, kept for the backward pass.
struct ScreenGaussian {
  bool visible = false;
  Vec3 p_cam = Vec3::Zero();
  Vec3 view_dir = Vec3::Zero(); // p - camera center, unnormalized
  Vec2 mean = Vec2::Zero();
  Mat2 cov = Mat2::Identity();
  Vec3 conic = Vec3::Zero(); // (A, B, C) of the inverse 2D covariance
  double depth = 0;
  double opacity = 0;
  Vec3 color = Vec3::Zero();
  std::array<bool, 3> color_clamped{};
  int radius = 0;
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1; // inclusive pixel footprint
  bool cov_clamped = false;

  bool covers(int x, int y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

struct RenderOutput {
  Image image;                 // H x W x 3
  std::vector<double> alpha;   // H x W accumulated opacity
  std::vector<ScreenGaussian> gaussians;
  // Per-pixel contributor lists in compositing (front-to-back) order, CSR.
  std::vector<uint32_t> pixel_offsets;
  std::vector<uint32_t> contributors;
  PixelMask mask;              // empty when the full frame was rendered
  size_t rendered_pixels = 0;
  size_t clamped_covariances = 0;
  RasterSettings settings;

  std::span<const uint32_t> contributors_of(size_t pixel) const {
    return {contributors.data() + pixel_offsets[pixel], pixel_offsets[pixel + 1] - pixel_offsets[pixel]};
  }
};

struct AttributeGrads {
  std::vector<double> positions;
  std::vector<double> rotations;
  std::vector<double> log_scales;
  std::vector<double> opacity_logits;
  std::vector<double> sh;
  std::vector<double> viewspace; // N x 2, dL/dp' in pixel units

  explicit AttributeGrads(const GaussianCloud& like);
  AttributeGrads() = default;
};

// Screen-space projection of every Gaussian (no compositing).
std::vector<ScreenGaussian> preprocess(const GaussianCloud& cloud, const Camera& cam,
                                       const RasterSettings& settings = {},
                                       size_t* clamped = nullptr);

RenderOutput rasterize(const GaussianCloud& cloud, const Camera& cam,
                       const PixelMask* pixel_mask = nullptr, const RasterSettings& settings = {});

AttributeGrads rasterize_backward(const RenderOutput& out, const Image& dL_dimage,
                                  const GaussianCloud& cloud, const Camera& cam);

} // namespace splat
