#pragma once

#include "splat/image.hpp"
#include "splat/scene.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace splat {

enum class MotionKind { translate, orbit, color_shift, opacity_pulse, mixed };

struct SynthConfig {
  int n_gaussians = 200;
  double dynamic_fraction = 0.1;
  MotionKind motion = MotionKind::translate;
  double amplitude = 0.1;
  bool localized = false; // dynamic set = nearest neighbours of a random anchor
  int n_views = 6;
  int n_test_views = 1;
  int width = 64;
  int height = 64;
  int n_frames = 5;
  int sh_degree = 2;
  double camera_distance = 3.0;
  double fov_deg = 40.0;
  uint64_t seed = 0;

  void validate() const;
  size_t dynamic_count() const;
};

std::string motion_name(MotionKind kind);
// Throws config_error naming the valid kinds.
MotionKind parse_motion(const std::string& name);

void apply_synth_config(SynthConfig& cfg, const std::map<std::string, std::string>& kv);
std::string synth_config_to_text(const SynthConfig& cfg);

struct SynthScene {
  SynthConfig config;
  std::vector<GaussianCloud> clouds;          // per frame
  std::vector<Camera> cameras;
  std::vector<Camera> test_cameras;
  std::vector<std::vector<Image>> frames;     // [frame][view]
  std::vector<std::vector<Image>> test_frames;
  std::vector<uint8_t> labels;                // 1 = dynamic
};

SynthScene generate(const SynthConfig& cfg);

// Ground-truth cloud for frame t, without rendering.
GaussianCloud synth_cloud(const SynthConfig& cfg, int frame, std::vector<uint8_t>* labels = nullptr);

// Camera text line: "w h fx fy cx cy near r00 r01 ... r22 t0 t1 t2".
std::string camera_to_line(const Camera& cam);
Camera camera_from_line(const std::string& line);
void save_cameras(const std::string& path, const std::vector<Camera>& cams);
std::vector<Camera> load_cameras(const std::string& path);

// Bundle layout:
//   scene.cfg, cameras.txt, test_cameras.txt, labels.u8,
//   gt/frame_XXXX.qgsc, frames/frame_XXXX/view_YY.png and test_YY.png
void save_bundle(const std::string& dir, const SynthScene& scene);

struct SceneBundle {
  SynthConfig config;
  std::vector<Camera> cameras;
  std::vector<Camera> test_cameras;
  std::vector<uint8_t> labels;
  int n_frames = 0;
  std::string dir;

  std::vector<Image> frames(int t) const;
  std::vector<Image> test_frames(int t) const;
  GaussianCloud ground_truth(int t) const;
};
SceneBundle load_bundle(const std::string& dir);

std::string frame_name(int t); // "frame_0007"

} // namespace splat
