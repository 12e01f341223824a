#include "splat/quantizer.hpp"

#include "splat/error.hpp"

#include <cmath>

namespace splat {

std::string_view attribute_name(AttributeKind kind) {
  switch (kind) {
  case AttributeKind::rotation: return "rotation";
  case AttributeKind::scale: return "scale";
  case AttributeKind::opacity: return "opacity";
  case AttributeKind::color_base: return "color_base";
  case AttributeKind::color_freq: return "color_freq";
  }
  return "unknown";
}

int residual_dim(AttributeKind kind, int sh_degree) {
  switch (kind) {
  case AttributeKind::rotation: return 4;
  case AttributeKind::scale: return 3;
  case AttributeKind::opacity: return 1;
  case AttributeKind::color_base: return 3;
  case AttributeKind::color_freq: return 3 * ((sh_degree + 1) * (sh_degree + 1) - 1);
  }
  return 0;
}

LinearDecoder LinearDecoder::random(int m, int l, std::mt19937_64& rng, double scale) {
  LinearDecoder d(m, l);
  if (l == 0)
    return d;
  const double bound = scale / std::sqrt(static_cast<double>(l));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& w : d.weights)
    w = u(rng);
  return d;
}

std::vector<int32_t> quantize_round(std::span<const double> values) {
  std::vector<int32_t> out(values.size());
  for (size_t i = 0; i < values.size(); ++i)
    out[i] = static_cast<int32_t>(std::round(values[i]));
  return out;
}

std::vector<double> decode_residuals(std::span<const int32_t> latents, const LinearDecoder& dec) {
  const int l = dec.in_dim, m = dec.out_dim;
  require(l > 0 ? latents.size() % l == 0 : latents.empty(), ErrorKind::dimension_mismatch,
          "latent width does not match the decoder");
  const size_t n = l > 0 ? latents.size() / l : 0;
  std::vector<double> out(n * m, 0.0);
  for (size_t i = 0; i < n; ++i) {
    const int32_t* li = latents.data() + i * l;
    for (int r = 0; r < m; ++r) {
      double acc = 0;
      for (int c = 0; c < l; ++c)
        acc += dec(r, c) * static_cast<double>(li[c]);
      out[i * m + r] = acc;
    }
  }
  return out;
}

SteGrads ste_grads(std::span<const double> dL_dr, const LinearDecoder& dec,
                   std::span<const int32_t> latents) {
  const int l = dec.in_dim, m = dec.out_dim;
  require(l > 0 && latents.size() % l == 0, ErrorKind::dimension_mismatch,
          "latent width does not match the decoder");
  const size_t n = latents.size() / l;
  require(dL_dr.size() == n * m, ErrorKind::dimension_mismatch,
          "residual gradient shape does not match the latents");
  SteGrads g{std::vector<double>(n * l, 0.0), std::vector<double>(static_cast<size_t>(m) * l, 0.0)};
  for (size_t i = 0; i < n; ++i) {
    const double* gr = dL_dr.data() + i * m;
    const int32_t* li = latents.data() + i * l;
    for (int r = 0; r < m; ++r) {
      if (gr[r] == 0)
        continue;
      for (int c = 0; c < l; ++c) {
        g.latents[i * l + c] += gr[r] * dec(r, c);
        g.decoder[static_cast<size_t>(r) * l + c] += gr[r] * li[c];
      }
    }
  }
  return g;
}

Penalty latent_std_penalty(std::span<const double> values, int dim) {
  require(dim > 0 && values.size() % dim == 0, ErrorKind::dimension_mismatch,
          "latent width does not divide the block");
  const size_t n = values.size() / dim;
  Penalty p{0, std::vector<double>(values.size(), 0.0)};
  if (n < 2)
    return p;
  for (int c = 0; c < dim; ++c) {
    double mean = 0;
    for (size_t i = 0; i < n; ++i)
      mean += values[i * dim + c];
    mean /= static_cast<double>(n);
    double var = 0;
    for (size_t i = 0; i < n; ++i) {
      const double d = values[i * dim + c] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double sd = std::sqrt(var);
    p.value += sd;
    if (sd == 0)
      continue;
    for (size_t i = 0; i < n; ++i)
      p.grad[i * dim + c] = (values[i * dim + c] - mean) / (static_cast<double>(n) * sd * dim);
  }
  p.value /= dim;
  return p;
}

} // namespace splat
