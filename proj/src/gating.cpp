#include "splat/gating.hpp"

#include "splat/error.hpp"

#include <algorithm>
#include <cmath>

namespace splat {

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double stretched(double s, const GateHyper& h) { return s * (h.gamma1 - h.gamma0) + h.gamma0; }

double noisy_pre(double log_alpha, double u, const GateHyper& h) {
  return sig((std::log(u) - std::log1p(-u) + log_alpha) / h.tau);
}

} // namespace

void GateHyper::validate() const {
  require(tau > 0 && gamma0 < 0 && gamma1 > 1, ErrorKind::invalid_input,
          "gate hyperparameters need tau > 0 and gamma0 < 0 < 1 < gamma1");
}

double GateHyper::l0_shift() const { return tau * std::log(-gamma0 / gamma1); }

double gate_value(double log_alpha, const GateHyper& hyp) {
  return std::clamp(stretched(sig(log_alpha / hyp.tau), hyp), 0.0, 1.0);
}

double gate_sample(double log_alpha, double u, const GateHyper& hyp) {
  return std::clamp(stretched(noisy_pre(log_alpha, u, hyp), hyp), 0.0, 1.0);
}

double gate_backward(double log_alpha, const GateHyper& hyp, double dL_dg) {
  const double s = sig(log_alpha / hyp.tau);
  const double g = stretched(s, hyp);
  if (!(g > 0 && g < 1))
    return 0.0;
  return dL_dg * (hyp.gamma1 - hyp.gamma0) * s * (1 - s) / hyp.tau;
}

double gate_sample_backward(double log_alpha, double u, const GateHyper& hyp, double dL_dg) {
  const double s = noisy_pre(log_alpha, u, hyp);
  const double g = stretched(s, hyp);
  if (!(g > 0 && g < 1))
    return 0.0;
  return dL_dg * (hyp.gamma1 - hyp.gamma0) * s * (1 - s) / hyp.tau;
}

double gate_l0_term(double log_alpha, const GateHyper& hyp) {
  return sig(log_alpha - hyp.l0_shift());
}

L0Loss gate_l0_loss(std::span<const double> log_alpha, const GateHyper& hyp) {
  L0Loss out{0, std::vector<double>(log_alpha.size())};
  for (size_t i = 0; i < log_alpha.size(); ++i) {
    const double s = gate_l0_term(log_alpha[i], hyp);
    out.value += s;
    out.grad[i] = s * (1 - s);
  }
  return out;
}

std::vector<double> gates_from_probs(std::span<const double> p, const GateHyper& hyp) {
  std::vector<double> out(p.size());
  const double shift = hyp.l0_shift();
  for (size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p[i], kGateProbMin, kGateProbMax);
    out[i] = std::log(q / (1 - q)) + shift;
  }
  return out;
}

std::vector<double> gated_position_residuals(const GateParams& params, const GateHyper& hyp) {
  require(params.pre_gated_residuals.size() == 3 * params.log_alpha.size(),
          ErrorKind::dimension_mismatch, "gate and residual counts differ");
  std::vector<double> out(params.pre_gated_residuals.size(), 0.0);
  for (size_t i = 0; i < params.size(); ++i) {
    const double g = gate_value(params.log_alpha[i], hyp);
    if (g == 0)
      continue;
    for (int k = 0; k < 3; ++k)
      out[3 * i + k] = g * params.pre_gated_residuals[3 * i + k];
  }
  return out;
}

} // namespace splat
