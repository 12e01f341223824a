#pragma once

#include <random>
#include <span>
#include <vector>

namespace splat {

struct GateHyper {
  double tau = 0.3;
  double gamma0 = -0.5;
  double gamma1 = 1.01;

  // Throws invalid_input unless tau > 0 and gamma0 < 0 < 1 < gamma1.
  void validate() const;
  // tau * log(-gamma0 / gamma1), the L0 offset.
  double l0_shift() const;
};

struct GateParams {
  std::vector<double> log_alpha;           // N
  std::vector<double> pre_gated_residuals; // N x 3

  size_t size() const { return log_alpha.size(); }
};

// sigmoid(log_alpha / tau) stretched to (gamma0, gamma1) and clamped to [0,1].
double gate_value(double log_alpha, const GateHyper& hyp);
// Stochastic hard-concrete sample with noise u in (0,1).
double gate_sample(double log_alpha, double u, const GateHyper& hyp);

double gate_backward(double log_alpha, const GateHyper& hyp, double dL_dg);
// Same derivative for the stochastic sample.
double gate_sample_backward(double log_alpha, double u, const GateHyper& hyp, double dL_dg);

// Per-element probability of a nonzero gate, sigmoid(log_alpha - shift).
double gate_l0_term(double log_alpha, const GateHyper& hyp);

struct L0Loss {
  double value = 0;
  std::vector<double> grad;
};
L0Loss gate_l0_loss(std::span<const double> log_alpha, const GateHyper& hyp);

constexpr double kGateProbMin = 1e-4;
constexpr double kGateProbMax = 1 - 1e-4;

std::vector<double> gates_from_probs(std::span<const double> p, const GateHyper& hyp);

// g_i * l_p_i per row.
std::vector<double> gated_position_residuals(const GateParams& params, const GateHyper& hyp);

} // namespace splat
