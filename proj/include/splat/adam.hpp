#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace splat {

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-15;

  explicit AdamState(size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// Bias-corrected Adam update in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr);

// A learnable row-major tensor with its own optimizer state.
struct ParamTensor {
  int width = 1;
  double lr = 0;
  std::vector<double> value;
  std::vector<double> grad;
  AdamState state;

  ParamTensor() = default;
  ParamTensor(size_t rows, int w, double rate, double fill = 0.0)
      : width(w), lr(rate), value(rows * w, fill), grad(rows * w, 0.0), state(rows * w) {}

  size_t rows() const { return width ? value.size() / width : 0; }
  void zero_grad();
  void step();
  // New rows start with zero moments.
  void append_rows(std::span<const double> rows);
  void compact(std::span<const uint8_t> keep);
};

} // namespace splat
