#pragma once

#include "splat/gating.hpp"
#include "splat/quantizer.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <string>

namespace splat {

enum class ResidualMode { quantized, raw };
enum class GateMode { learned, always_on };

struct TrainConfig {
  std::string preset = "a";
  uint64_t seed = 0;
  int sh_degree = 2;

  int first_frame_epochs = 500;
  int residual_epochs = 10;
  double masked_fraction = 0.3;
  double lambda_dssim = 0.2;
  double lambda_reg = 0.01;
  double lambda_std = 0.0;

  // First-frame learning rates. Position rates are multiplied by the scene
  // extent.
  double lr_position = 1.6e-4;
  double lr_rotation = 0.001;
  double lr_scale = 0.005;
  double lr_opacity = 0.05;
  double lr_sh_dc = 0.0025;
  double lr_sh_rest = 0.000125;

  int ff_densify_from = 50;
  int ff_densify_until = 250;
  int ff_densify_interval = 25;
  double ff_densify_threshold = 0.0002;

  bool quantize_first_frame_sh = true;
  int ff_sh_latent_dim = 8;
  double ff_sh_latent_lr = 0.05;
  double ff_sh_decoder_lr = 0.001;

  // Residual frames.
  ResidualMode residual_mode = ResidualMode::quantized;
  GateMode gate_mode = GateMode::learned;
  bool stochastic_gates = false;
  double lr_position_residual = 1.6e-4;
  double lr_gate = 0.1;
  GateHyper gate;
  std::array<int, kAttributeKinds> latent_dims = {6, 8, 3, 8, 4};
  std::array<double, kAttributeKinds> latent_lrs = {0.025, 0.01, 0.05, 0.0125, 0.000625};
  std::array<double, kAttributeKinds> decoder_lrs = {0.001, 0.0001, 0.0001, 0.001, 0.001};
  double decoder_init_scale = 1.0;
  // Raw-mode residual rates.
  std::array<double, kAttributeKinds> raw_lrs = {0.001, 0.005, 0.05, 0.0025, 0.000125};

  bool densify_residual = true;
  int densify_from = 6; // 1-based epoch
  int densify_until = 8;
  int densify_interval = 2;
  double densify_threshold = 0.00125;
  double opacity_floor = 0.005;
  double percent_dense = 0.01;
  double added_gate_prob = 0.99;

  double t_d = 0.001;
  int dilation = 48;
  double mask_alpha = 1e-3;

  bool depth_init = false;
  double t_z = 0.10;
  int depth_stride = 4;

  // Throws config_error on out-of-range values.
  void validate() const;
};

TrainConfig preset_a();
TrainConfig preset_b();
// "a" or "b"; throws config_error otherwise.
TrainConfig preset(const std::string& name);

// Applies `key = value` pairs; unknown keys and bad values throw
// config_error naming the key.
void apply_config(TrainConfig& cfg, const std::map<std::string, std::string>& kv);
// Canonical `key = value` text covering every field.
std::string config_to_text(const TrainConfig& cfg);
uint64_t config_hash(const TrainConfig& cfg);

// Parses `key = value` lines; `#` starts a comment.
std::map<std::string, std::string> parse_key_values(const std::string& text);
std::map<std::string, std::string> load_key_values(const std::string& path);

} // namespace splat
