#pragma once
#include <vector>

#include "csma_mpr/model.hpp"

namespace csma_mpr {

// All delays are in time slots. Finite mode pairs the per-user arrival rate
// lambda_v with the finite idle probability; limiting mode pairs the scaled
// rate lambda~_v with e^-gamma, so its "delays" are slots per unit of scaled
// load (per-user delay / N).
struct DelayReport {
  double service_delay = 0.0;  // slots from reaching the queue head to departure
  double total_delay = 0.0;    // slots from arrival to departure
  double p_idle = 0.0;         // idle probability at the given utilization
  double p_succ = 0.0;         // per-super-slot HOL delivery probability
};

// D_v = rho_v / lambda_v. Requires a stable utilization (all components < 1)
// and lambda_v > 0; throws Err::unstable_input / Err::zero_arrival otherwise.
double service_delay(const Scenario& s, const std::vector<double>& rho, int v);

// Equivalent renewal form (P_idle + tau (1 - P_idle)) / P_succ_v with
// P_succ_v = P_v(rho)/rho_v; agrees with service_delay at equilibrium.
double service_delay_recursive(const Scenario& s, const std::vector<double>& rho, int v);

// Mean arrival-to-departure time
//   [rho_v (1/lambda_v - 1/tau) + ((tau-1)/2)(1 - P_idle)] / (1 - rho_v).
double total_delay(const Scenario& s, const std::vector<double>& rho, int v);

DelayReport delay_report(const Scenario& s, const std::vector<double>& rho, int v);

// Minimum transmission probabilities meeting per-class mean total-delay
// targets T_v, finite mode only. Solves lambda_v = R_v(x) for the attempt
// probabilities x_v* = rho_v p_v, then applies
//   p_v >= [(1/lambda_v - 1/kappa + T_v) x_v*]
//          / [((kappa-1)/2)(1 - P_idle(x*)) + T_v].
// Throws Err::infeasible when no attempt fixed point exists (arrival rates
// outside the stability region).
struct DesignResult {
  std::vector<double> p_min;   // per-class lower bounds (0 for lambda_v = 0)
  std::vector<double> x_star;  // attempt-probability fixed point
  double p_idle_at_x = 1.0;    // P_idle(x*)
};

DesignResult design_tx_probs(const Scenario& s, const std::vector<double>& delay_targets);

}  // namespace csma_mpr
