#include "splat/adam.hpp"

#include "splat/error.hpp"

#include <algorithm>
#include <cmath>

namespace splat {

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr) {
  require(params.size() == grads.size() && params.size() == state.m.size() &&
              params.size() == state.v.size(),
          ErrorKind::dimension_mismatch, "adam: parameter, gradient and moment sizes differ");
  ++state.step;
  const double bc1 = 1 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1 - state.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

void ParamTensor::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

void ParamTensor::step() { adam_step(value, grad, state, lr); }

void ParamTensor::append_rows(std::span<const double> rows) {
  require(width > 0 && rows.size() % width == 0, ErrorKind::dimension_mismatch,
          "appended rows do not match the tensor width");
  value.insert(value.end(), rows.begin(), rows.end());
  grad.resize(value.size(), 0.0);
  state.m.resize(value.size(), 0.0);
  state.v.resize(value.size(), 0.0);
}

void ParamTensor::compact(std::span<const uint8_t> keep) {
  require(keep.size() == rows(), ErrorKind::dimension_mismatch, "keep mask size differs");
  size_t out = 0;
  for (size_t r = 0; r < keep.size(); ++r) {
    if (!keep[r])
      continue;
    for (int c = 0; c < width; ++c) {
      value[out * width + c] = value[r * width + c];
      state.m[out * width + c] = state.m[r * width + c];
      state.v[out * width + c] = state.v[r * width + c];
    }
    ++out;
  }
  value.resize(out * width);
  grad.assign(value.size(), 0.0);
  state.m.resize(value.size());
  state.v.resize(value.size());
}

} // namespace splat
