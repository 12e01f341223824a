#include "splat/dynamics.hpp"

#include "splat/error.hpp"
#include "splat/rasterizer.hpp"

#include <algorithm>
#include <cmath>

namespace splat {

ScoreVector score_vector(const GaussianCloud& cloud_prev, std::span<const Camera> cams,
                         std::span<const Image> frames_prev, std::span<const Image> frames_next) {
  require(cams.size() == frames_prev.size() && cams.size() == frames_next.size(),
          ErrorKind::dimension_mismatch, "view count differs between cameras and frames");
  require(!cams.empty(), ErrorKind::invalid_input, "score needs at least one view");
  const size_t n = cloud_prev.size();
  ScoreVector s{std::vector<double>(2 * n, 0.0), std::vector<double>(n, 0.0)};
  for (size_t v = 0; v < cams.size(); ++v) {
    const Camera& cam = cams[v];
    const Image& prev = frames_prev[v];
    const Image& next = frames_next[v];
    require(prev.width == cam.width && prev.height == cam.height && next.same_shape(prev) &&
                prev.channels == 3,
            ErrorKind::dimension_mismatch, "frame size differs from its camera");
    // Both MSE gradients share the render term, so their difference is a
    // single backward pass with 2 (prev - next) / P.
    Image diff(cam.width, cam.height, 3);
    const double inv = 2.0 / static_cast<double>(prev.size());
    bool any = false;
    for (size_t i = 0; i < diff.size(); ++i) {
      diff.data[i] = inv * (prev.data[i] - next.data[i]);
      any = any || diff.data[i] != 0;
    }
    if (!any)
      continue;
    const RenderOutput out = rasterize(cloud_prev, cam);
    const AttributeGrads g = rasterize_backward(out, diff, cloud_prev, cam);
    const double sx = 0.5 * cam.width, sy = 0.5 * cam.height;
    for (size_t i = 0; i < n; ++i) {
      s.d[2 * i] += g.viewspace[2 * i] * sx;
      s.d[2 * i + 1] += g.viewspace[2 * i + 1] * sy;
    }
  }
  const double inv_v = 1.0 / static_cast<double>(cams.size());
  for (size_t i = 0; i < n; ++i) {
    s.d[2 * i] *= inv_v;
    s.d[2 * i + 1] *= inv_v;
    s.norms[i] = std::hypot(s.d[2 * i], s.d[2 * i + 1]);
  }
  return s;
}

double median(std::vector<double> values) {
  if (values.empty())
    return 0.0;
  const size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double hi = values[mid];
  if (values.size() % 2 == 1)
    return hi;
  const double lo = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lo + hi);
}

std::vector<double> gate_init_probs(const ScoreVector& scores) {
  const double med = median(scores.norms);
  std::vector<double> p(scores.size());
  for (size_t i = 0; i < p.size(); ++i) {
    const double d = scores.norms[i];
    if (med > 0)
      p[i] = d / (d + med);
    else
      p[i] = d > 0 ? 1.0 : 0.0;
  }
  return p;
}

DynamicMasks dynamic_masks(const GaussianCloud& cloud_prev, const ScoreVector& scores, double t_d,
                           std::span<const Camera> cams, int dilation, double alpha_threshold) {
  require(t_d >= 0, ErrorKind::invalid_input, "dynamic threshold must be >= 0");
  require(scores.size() == cloud_prev.size(), ErrorKind::dimension_mismatch,
          "score count differs from the cloud");
  DynamicMasks out;
  std::vector<uint8_t> keep(cloud_prev.size(), 0);
  for (uint32_t i = 0; i < scores.size(); ++i)
    if (scores.norms[i] > t_d) {
      keep[i] = 1;
      out.dynamic.push_back(i);
    }
  const GaussianCloud subset = cloud_prev.select(keep);
  for (const Camera& cam : cams) {
    PixelMask m(cam.width, cam.height);
    if (!subset.empty()) {
      const RenderOutput r = rasterize(subset, cam);
      for (size_t p = 0; p < m.bits.size(); ++p)
        m.bits[p] = r.alpha[p] > alpha_threshold ? 1 : 0;
      m = dilate(m, dilation);
    }
    out.masks.push_back(std::move(m));
  }
  return out;
}

} // namespace splat
