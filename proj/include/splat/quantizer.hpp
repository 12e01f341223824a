#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace splat {

enum class AttributeKind : uint8_t { rotation = 0, scale, opacity, color_base, color_freq };
constexpr int kAttributeKinds = 5;
constexpr AttributeKind kAllAttributeKinds[kAttributeKinds] = {
    AttributeKind::rotation, AttributeKind::scale, AttributeKind::opacity,
    AttributeKind::color_base, AttributeKind::color_freq};

std::string_view attribute_name(AttributeKind kind);
// Residual width M for an attribute: 4, 3, 1, 3, 3(B-1).
int residual_dim(AttributeKind kind, int sh_degree);

// Continuous latents, N x L row-major.
struct LatentBlock {
  AttributeKind kind = AttributeKind::rotation;
  int dim = 0;
  std::vector<double> values;

  size_t rows() const { return dim ? values.size() / dim : 0; }
};

// M x L row-major weight matrix D.
struct LinearDecoder {
  int out_dim = 0;
  int in_dim = 0;
  std::vector<double> weights;

  LinearDecoder() = default;
  LinearDecoder(int m, int l) : out_dim(m), in_dim(l), weights(static_cast<size_t>(m) * l, 0.0) {}

  double operator()(int r, int c) const { return weights[static_cast<size_t>(r) * in_dim + c]; }

  // Entries uniform in +-scale/sqrt(L).
  static LinearDecoder random(int m, int l, std::mt19937_64& rng, double scale = 1.0);

  bool operator==(const LinearDecoder&) const = default;
};

// Round half away from zero.
std::vector<int32_t> quantize_round(std::span<const double> values);

// r_i = D l_i for every row; returns N x M.
std::vector<double> decode_residuals(std::span<const int32_t> latents, const LinearDecoder& dec);

struct SteGrads {
  std::vector<double> latents; // N x L
  std::vector<double> decoder; // M x L
};
// Rounding is treated as identity in the backward pass.
SteGrads ste_grads(std::span<const double> dL_dr, const LinearDecoder& dec,
                   std::span<const int32_t> latents);

struct Penalty {
  double value = 0;
  std::vector<double> grad;
};
// Mean over columns of the population standard deviation of each column.
Penalty latent_std_penalty(std::span<const double> values, int dim);

} // namespace splat
