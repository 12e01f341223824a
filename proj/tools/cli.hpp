#pragma once

#include "splat/config.hpp"
#include "splat/scene.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace splat::cli {

// Stream directory layout:
//   manifest.json, config.txt, stats.csv, cameras.txt, test_cameras.txt,
//   frame_0000.qgsc, frame_0001.qnfp, ...
std::string cloud_file(int t);  // "frame_0000.qgsc"
std::string packet_file(int t); // "frame_0007.qnfp"

struct FrameRow {
  int frame = 0;
  std::string file;
  size_t bytes = 0;
  size_t gaussians = 0;
  double psnr_db = 0;
  double ssim = 0;
  size_t active_gates = 0;
  double train_ms = 0;
  double render_fps = 0;
};

struct RunManifest {
  std::string config_hash; // 16 hex digits
  std::string scene_hash;
  std::string config_text;
  std::string scene_dir;
  uint64_t seed = 0;
  std::vector<FrameRow> rows; // one per encoded frame, in order
};

RunManifest load_manifest(const std::string& stream_dir);
void save_manifest(const std::string& stream_dir, const RunManifest& m);

// Preset, then the config file, then explicit flags.
struct ConfigSources {
  std::string preset = "a";
  std::string config_path;
  std::optional<uint64_t> seed;
};
TrainConfig resolve_config(const ConfigSources& src);

struct SynthOptions {
  std::string config_path;
  std::string out_dir;
  std::optional<uint64_t> seed;
  std::optional<int> frames;
};
void cmd_synth(const SynthOptions& opt, std::ostream& log);

struct EncodeOptions {
  std::string scene_dir;
  std::string out_dir;
  ConfigSources config;
  std::optional<int> frames; // encode only the first n frames
};
RunManifest cmd_encode(const EncodeOptions& opt, std::ostream& log);

// Frame 0 from the stored cloud, then every packet up to t in order.
GaussianCloud decode_stream(const std::string& stream_dir, int t);
void cmd_decode(const std::string& stream_dir, int t, const std::string& out_path);

struct RenderOptions {
  std::string stream_dir;
  int frame = 0;
  std::optional<int> view;   // index into the stored cameras
  bool test_view = false;    // index into the stored test cameras instead
  std::string camera_path;   // or the first camera line of this file
  std::string out_png;
};
void cmd_render(const RenderOptions& opt);

struct MetricsOptions {
  std::string stream_dir;
  std::string scene_dir;
  std::string out_csv;
  std::string plots_dir; // empty: no plots
  bool test_views = false;
};
std::vector<FrameRow> cmd_metrics(const MetricsOptions& opt);

// Full command-line entry point. Errors go to `err` as
// "error: <kind>: <message>"; the return value is the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace splat::cli
