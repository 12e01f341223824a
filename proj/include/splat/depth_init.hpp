#pragma once

#include "splat/image.hpp"
#include "splat/scene.hpp"

#include <span>
#include <vector>

namespace splat {

struct ScaleShift {
  double scale = 1;
  double shift = 0;
};

// Least-squares (a, b) minimizing sum (a * pred + b - truth)^2.
ScaleShift align_scale_shift(std::span<const double> pred, std::span<const double> truth);

struct ColoredPoints {
  std::vector<Vec3> points;
  std::vector<Vec3> colors;

  size_t size() const { return points.size(); }
};

// Unprojects every stride-th masked pixel (row-major raster, both axes) at
// its depth. `depth` is H x W camera-space z; colors come from `frame` when
// given.
ColoredPoints backproject_fill(std::span<const double> depth, const PixelMask& mask,
                               const Camera& cam, int stride, const Image* frame = nullptr);

// Pixels whose accumulated alpha is below t_z.
PixelMask low_alpha_mask(std::span<const double> alpha, int width, int height, double t_z);

} // namespace splat
