#pragma once

#include "splat/image.hpp"
#include "splat/scene.hpp"

#include <span>
#include <vector>

namespace splat {

struct ScoreVector {
  std::vector<double> d;     // N x 2, NDC units
  std::vector<double> norms; // N

  size_t size() const { return norms.size(); }
};

// Averaged per-view difference of the viewspace gradients of the MSE
// against the next and the previous frame, both rendered from cloud_prev.
ScoreVector score_vector(const GaussianCloud& cloud_prev, std::span<const Camera> cams,
                         std::span<const Image> frames_prev, std::span<const Image> frames_next);

// p_i = |d_i| / (|d_i| + median |d|).
std::vector<double> gate_init_probs(const ScoreVector& scores);

// Median of all values; mean of the two middle values for even counts.
double median(std::vector<double> values);

constexpr double kMaskAlphaThreshold = 1e-3;

struct DynamicMasks {
  std::vector<PixelMask> masks;   // one per camera, already dilated
  std::vector<uint32_t> dynamic;  // indices with |d_i| > t_d
};

DynamicMasks dynamic_masks(const GaussianCloud& cloud_prev, const ScoreVector& scores, double t_d,
                           std::span<const Camera> cams, int dilation,
                           double alpha_threshold = kMaskAlphaThreshold);

} // namespace splat
