#pragma once

#include "splat/codec.hpp"
#include "splat/config.hpp"
#include "splat/depth_init.hpp"
#include "splat/image.hpp"
#include "splat/scene.hpp"

#include <functional>
#include <ostream>
#include <span>
#include <vector>

namespace splat {

struct IterStat {
  uint32_t frame = 0;
  int iter = 0;
  double loss = 0;
  double psnr = 0;
  size_t active_gates = 0;
  size_t packet_bytes = 0;
  double wall_ms = 0;
};
using StatsSink = std::function<void(const IterStat&)>;

// "frame,iter,loss,psnr,active_gates,packet_bytes,wall_ms"
void write_stats_header(std::ostream& os);
void write_stats_row(std::ostream& os, const IterStat& s);

// 1.1 x the largest camera distance from the camera centroid; 1 when the
// rig is degenerate.
double scene_extent(std::span<const Camera> cams);

// Scale from the mean distance to the 3 nearest neighbours, identity
// rotation, opacity 0.1, DC color from the point color, no higher SH.
GaussianCloud init_from_points(const ColoredPoints& pts, int sh_degree);

// Adds backprojected points in pixels the initial points leave empty
// (alpha < t_z). Each depth map is scale/shift aligned to the depths of the
// projected initial points first.
ColoredPoints augment_with_depth(const ColoredPoints& pts, std::span<const Image> frames,
                                 std::span<const Camera> cams,
                                 std::span<const std::vector<double>> depths, const TrainConfig& cfg);

struct FirstFrameResult {
  GaussianCloud cloud;
  double psnr = 0;            // mean over training views
  size_t sh_rest_bytes = 0;   // entropy-coded latents + f32 decoder
  size_t iterations = 0;
  size_t densify_events = 0;
};

FirstFrameResult train_first_frame(std::span<const Image> frames, std::span<const Camera> cams,
                                   const ColoredPoints& init_points, const TrainConfig& cfg,
                                   const StatsSink& sink = {});

struct ResidualFrameStats {
  uint32_t frame = 0;
  int iterations = 0;
  int masked_iterations = 0;
  double initial_loss = 0; // mean full-frame loss of cloud_prev
  double final_loss = 0;   // same for cloud_t
  double initial_psnr = 0;
  double psnr = 0;
  size_t active_gates = 0;
  size_t dynamic_count = 0;
  size_t added = 0;
  size_t removed = 0;
  size_t packet_bytes = 0;
  // Pixels composited, and what full-frame rendering would have cost.
  size_t rendered_pixels = 0;
  size_t full_pixels = 0;
  size_t masked_phase_rendered = 0;
  size_t masked_phase_full = 0;
  double wall_ms = 0;
};

struct ResidualFrameResult {
  GaussianCloud cloud;         // apply_residuals(cloud_prev, residuals)
  ResidualSet residuals;
  std::vector<double> gates;   // final gate per previous Gaussian
  std::vector<double> scores;  // |d_i| per previous Gaussian
  ResidualFrameStats stats;
};

ResidualFrameResult train_residual_frame(const GaussianCloud& cloud_prev,
                                         std::span<const Image> frames_prev,
                                         std::span<const Image> frames_t,
                                         std::span<const Camera> cams, const TrainConfig& cfg,
                                         uint32_t frame_index, const StatsSink& sink = {});

// Mean combined loss and PSNR of a cloud over views.
struct ViewQuality {
  double loss = 0;
  double psnr = 0;
  double ssim = 0;
};
ViewQuality evaluate(const GaussianCloud& cloud, std::span<const Camera> cams,
                     std::span<const Image> frames, double lambda_dssim = 0.2);

uint64_t frame_seed(uint64_t seed, uint32_t frame_index);

} // namespace splat
