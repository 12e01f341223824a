#include "splat/densify.hpp"

#include "splat/error.hpp"

#include <algorithm>
#include <cmath>

namespace splat {

std::vector<uint32_t> DensifyResult::removed_indices() const {
  std::vector<uint32_t> out;
  for (uint32_t i = 0; i < keep.size(); ++i)
    if (!keep[i])
      out.push_back(i);
  return out;
}

DensifyResult densify_and_prune(const GaussianCloud& cloud, std::span<const double> grad_norms,
                                const DensifySettings& settings, std::mt19937_64& rng) {
  require(grad_norms.size() == cloud.size(), ErrorKind::dimension_mismatch,
          "gradient accumulator size differs from the cloud");
  DensifyResult r;
  r.keep.assign(cloud.size(), 1);
  r.added = GaussianCloud(cloud.sh_degree);
  const double size_limit = settings.percent_dense * settings.scene_extent;
  const double shrink = std::log(settings.split_factor);
  std::normal_distribution<double> normal(0.0, 1.0);

  for (size_t i = 0; i < cloud.size(); ++i) {
    if (grad_norms[i] < settings.grad_threshold || cloud.opacity(i) < settings.opacity_floor)
      continue;
    const Vec3 s = cloud.scale(i);
    if (s.maxCoeff() <= size_limit) {
      r.added.push_from(cloud, i);
      r.parent.push_back(static_cast<uint32_t>(i));
      ++r.cloned;
      continue;
    }
    const Mat3 rot = quaternion_to_rotation(cloud.rotation(i).normalized());
    for (int child = 0; child < 2; ++child) {
      const Vec3 local(normal(rng) * s.x(), normal(rng) * s.y(), normal(rng) * s.z());
      const size_t row = r.added.size();
      r.added.push_from(cloud, i);
      r.added.set_position(row, cloud.position(i) + rot * local);
      for (int k = 0; k < 3; ++k)
        r.added.log_scales[3 * row + k] -= shrink;
      r.parent.push_back(static_cast<uint32_t>(i));
    }
    r.keep[i] = 0;
    ++r.split;
  }
  for (size_t i = 0; i < cloud.size(); ++i)
    if (r.keep[i] && cloud.opacity(i) < settings.opacity_floor) {
      r.keep[i] = 0;
      ++r.pruned;
    }
  return r;
}

GaussianCloud apply_densify(const GaussianCloud& cloud, const DensifyResult& result) {
  GaussianCloud out = cloud.select(result.keep);
  for (size_t i = 0; i < result.added.size(); ++i)
    out.push_from(result.added, i);
  return out;
}

} // namespace splat
