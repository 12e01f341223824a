#pragma once

#include "splat/quantizer.hpp"
#include "splat/scene.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace splat {

struct SparseCOO {
  std::vector<uint32_t> indices; // strictly increasing
  std::vector<float> values;     // 3 per index

  size_t size() const { return indices.size(); }
  bool operator==(const SparseCOO&) const = default;
};

// Rows that are exactly zero are omitted; values are narrowed to f32.
SparseCOO coo_encode(std::span<const double> dense);
// Throws decode_error for out-of-range or unsorted indices.
std::vector<double> coo_decode(const SparseCOO& coo, size_t n);

enum class ResidualEncoding : uint8_t { none = 0, quantized = 1, raw = 2 };

struct AttributeResidual {
  AttributeKind kind = AttributeKind::rotation;
  ResidualEncoding encoding = ResidualEncoding::none;
  int out_dim = 0;
  int latent_dim = 0;
  std::vector<int32_t> latents; // N x L, quantized
  LinearDecoder decoder;        // f32-representable weights
  std::vector<float> raw;       // N x M, raw

  // N x M residual rows.
  std::vector<double> decode(size_t n) const;
  bool operator==(const AttributeResidual&) const = default;
};

struct ResidualSet {
  uint32_t frame_index = 0;
  uint32_t count_before = 0;
  uint32_t count_after = 0;
  int sh_degree = 0;
  std::array<AttributeResidual, kAttributeKinds> attributes;
  SparseCOO positions;
  GaussianCloud additions;        // f16-representable
  std::vector<uint32_t> removals; // sorted, < count_before

  // An all-zero residual set for a cloud of n Gaussians.
  static ResidualSet empty(uint32_t frame, uint32_t n, int sh_degree);
  // Throws invalid_input on inconsistent counts.
  void validate() const;
  bool operator==(const ResidualSet&) const = default;
};

constexpr uint16_t kPacketVersion = 1;

enum class SectionType : uint8_t {
  rotation = 1,
  scale = 2,
  opacity = 3,
  color_base = 4,
  color_freq = 5,
  positions = 6,
  additions = 7,
  removals = 8,
};

std::vector<uint8_t> pack_frame(const ResidualSet& r);
ResidualSet unpack_frame(std::span<const uint8_t> bytes);

struct SectionInfo {
  SectionType type;
  uint32_t offset;
  uint32_t length;
};
// Parses the header and section table only.
std::vector<SectionInfo> packet_sections(std::span<const uint8_t> bytes);

// A_t = A_{t-1} + R_t, then removals, then additions.
GaussianCloud apply_residuals(const GaussianCloud& prev, const ResidualSet& r);

// Rounds every attribute of the cloud to f16 precision.
GaussianCloud round_to_f16(const GaussianCloud& cloud);

} // namespace splat
