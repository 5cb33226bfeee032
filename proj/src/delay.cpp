#include "csma_mpr/delay.hpp"

#include <algorithm>
#include <cmath>

#include "csma_mpr/errors.hpp"
#include "csma_mpr/meanfield.hpp"

namespace csma_mpr {

namespace {

void require_stable_rho(const Scenario& s, const std::vector<double>& rho) {
  if (static_cast<int>(rho.size()) != s.num_classes())
    fail(Err::config_invalid, "utilization vector length must match the class count");
  for (double r : rho) {
    if (!(r >= 0.0) || !std::isfinite(r))
      fail(Err::config_invalid, "utilization components must be finite and >= 0");
    if (r >= 1.0) fail(Err::unstable_input, "utilization >= 1: queue is not stable");
  }
}

double arrival_rate_for(const Scenario& s, int v) {
  return s.mode == Mode::finite ? s.lambda(v) : s.lambda_tilde(v);
}

double idle_probability(const Scenario& s, const std::vector<double>& rho) {
  if (s.mode == Mode::finite) return p_idle_finite(s, rho);
  return std::exp(-s.gamma_of(rho));
}

// Per-super-slot probability that a backlogged class-v user's HOL packet
// departs: P_v(rho)/rho_v finite, p~_v chi(gamma) e^-gamma limiting.
double hol_success(const Scenario& s, const std::vector<double>& rho, int v) {
  if (s.mode == Mode::finite) {
    if (rho[v] <= 0.0)
      fail(Err::zero_arrival, "class has zero utilization: no HOL packet to serve");
    return p_succ_finite(s, rho, v) / rho[v];
  }
  const AllOrNothingMpr q = mpr_effective(s.mpr);
  const double gamma = s.gamma_of(rho);
  return s.p_tilde(v) * chi(q, gamma) * std::exp(-gamma);
}

}  // namespace

double service_delay(const Scenario& s, const std::vector<double>& rho, int v) {
  require_stable_rho(s, rho);
  const double lambda = arrival_rate_for(s, v);
  if (lambda <= 0.0) fail(Err::zero_arrival, "service delay undefined at zero arrival rate");
  return rho[v] / lambda;
}

double service_delay_recursive(const Scenario& s, const std::vector<double>& rho, int v) {
  require_stable_rho(s, rho);
  const double p_idle = idle_probability(s, rho);
  const double succ = hol_success(s, rho, v);
  if (succ <= 0.0) fail(Err::zero_arrival, "HOL delivery probability is zero");
  return (p_idle + s.tau * (1.0 - p_idle)) / succ;
}

double total_delay(const Scenario& s, const std::vector<double>& rho, int v) {
  require_stable_rho(s, rho);
  const double lambda = arrival_rate_for(s, v);
  if (lambda <= 0.0) fail(Err::zero_arrival, "total delay undefined at zero arrival rate");
  const double p_idle = idle_probability(s, rho);
  const double tau = s.tau;
  const double num =
      rho[v] * (1.0 / lambda - 1.0 / tau) + 0.5 * (tau - 1.0) * (1.0 - p_idle);
  return num / (1.0 - rho[v]);
}

DelayReport delay_report(const Scenario& s, const std::vector<double>& rho, int v) {
  DelayReport r;
  r.service_delay = service_delay(s, rho, v);
  r.total_delay = total_delay(s, rho, v);
  r.p_idle = idle_probability(s, rho);
  r.p_succ = hol_success(s, rho, v);
  return r;
}

DesignResult design_tx_probs(const Scenario& s, const std::vector<double>& delay_targets) {
  require_valid(s);
  if (s.mode != Mode::finite)
    fail(Err::config_invalid, "design_tx_probs needs a finite-population scenario");
  const int V = s.num_classes();
  if (static_cast<int>(delay_targets.size()) != V)
    fail(Err::config_invalid, "delay-target vector length must match the class count");
  for (double t : delay_targets)
    if (!(t > 0.0) || !std::isfinite(t))
      fail(Err::config_invalid, "delay targets must be finite and > 0");

  // Solve lambda_v = P_v(x) / (P_idle(x) + tau (1 - P_idle(x))) for the
  // per-class attempt probabilities by damped fixed-point iteration on
  // x_v <- lambda_v * den(x) * x_v / P_v(x).
  std::vector<double> x(V);
  for (int v = 0; v < V; ++v) {
    const double l = s.lambda(v);
    x[v] = l > 0.0 ? std::clamp(l * s.tau, 1e-9, 0.5) : 0.0;
  }
  auto map = [&](const std::vector<double>& cur) {
    const double den =
        p_idle_attempt(s, cur) + s.tau * (1.0 - p_idle_attempt(s, cur));
    std::vector<double> out(V);
    for (int v = 0; v < V; ++v) {
      const double l = s.lambda(v);
      if (l == 0.0) {
        out[v] = 0.0;
        continue;
      }
      const double xv = std::max(cur[v], 1e-300);
      const double per_unit = p_succ_attempt(s, cur, v) / xv;  // P_v(x)/x_v
      out[v] = std::clamp(l * den / per_unit, 0.0, 1.0);
    }
    return out;
  };

  const double damping = 0.5, tol = 1e-12;
  bool converged = false;
  for (int it = 0; it < 10000 && !converged; ++it) {
    auto next = map(x);
    double delta = 0.0;
    for (int v = 0; v < V; ++v) {
      next[v] = x[v] + damping * (next[v] - x[v]);
      delta = std::max(delta, std::abs(next[v] - x[v]));
    }
    x = std::move(next);
    converged = delta < tol;
  }
  if (!converged)
    fail(Err::infeasible, "no attempt-probability fixed point: arrival rates appear to "
                          "lie outside the stability region");
  // Reject clamp artifacts: the rates must actually be met at x.
  const double p_idle_x = p_idle_attempt(s, x);
  const double den = p_idle_x + s.tau * (1.0 - p_idle_x);
  for (int v = 0; v < V; ++v) {
    const double achieved = p_succ_attempt(s, x, v) / den;
    if (std::abs(achieved - s.lambda(v)) > 1e-10 * std::max(1.0, s.lambda(v)))
      fail(Err::infeasible, "attempt iteration stalled without meeting the arrival rates "
                            "(arrival rates outside the stability region)");
  }

  DesignResult res;
  res.x_star = x;
  res.p_idle_at_x = p_idle_x;
  res.p_min.resize(V);
  const double kappa = s.kappa;
  for (int v = 0; v < V; ++v) {
    if (s.lambda(v) == 0.0) {
      res.p_min[v] = 0.0;
      continue;
    }
    const double T = delay_targets[v];
    const double num = (1.0 / s.lambda(v) - 1.0 / kappa + T) * x[v];
    const double denom = 0.5 * (kappa - 1.0) * (1.0 - p_idle_x) + T;
    res.p_min[v] = num / denom;
  }
  return res;
}

}  // namespace csma_mpr
