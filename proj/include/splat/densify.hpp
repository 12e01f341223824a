#pragma once

#include "splat/scene.hpp"

#include <random>
#include <span>
#include <vector>

namespace splat {

struct DensifySettings {
  double grad_threshold = 0.00125; // mean NDC viewspace gradient norm
  double opacity_floor = 0.005;
  double scene_extent = 1.0;
  double percent_dense = 0.01; // split when max scale > percent_dense * extent
  double split_factor = 1.6;
};

struct DensifyResult {
  std::vector<uint8_t> keep; // per input row
  GaussianCloud added;       // appended after the kept rows
  std::vector<uint32_t> parent;
  size_t cloned = 0;
  size_t split = 0;
  size_t pruned = 0;

  std::vector<uint32_t> removed_indices() const;
  bool changed() const { return cloned || split || pruned; }
};

// Clone small and split large high-gradient Gaussians, prune faint ones.
DensifyResult densify_and_prune(const GaussianCloud& cloud, std::span<const double> grad_norms,
                                const DensifySettings& settings, std::mt19937_64& rng);

// Kept rows in order, then the additions.
GaussianCloud apply_densify(const GaussianCloud& cloud, const DensifyResult& result);

} // namespace splat
