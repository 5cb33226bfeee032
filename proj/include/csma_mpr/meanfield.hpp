#pragma once
#include <vector>

#include "csma_mpr/model.hpp"

namespace csma_mpr {

// ---- finite-population quantities (all-or-nothing reception) ----
// rho[v] = probability a class-v queue is non-empty at a super-slot boundary.

// P(no one transmits at a boundary) = prod_u (1 - rho_u p_u)^{N_u}.
double p_idle_finite(const Scenario& s, const std::vector<double>& rho);

// Same quantities parameterized by the raw per-class attempt probabilities
// x_u = rho_u p_u (used by the transmission-probability design, where p itself
// is the unknown).
double p_idle_attempt(const Scenario& s, const std::vector<double>& x);
double p_succ_attempt(const Scenario& s, const std::vector<double>& x, int v);

// Per-super-slot probability that a given class-v user's head-of-line packet is
// successfully delivered: sum over transmitter counts (n_1..n_V), n_u <= min(M, N_u),
// 1 <= sum n <= M, of (n_v/N_v) q_{sum n} prod_u Binom(N_u, n_u; rho_u p_u).
double p_succ_finite(const Scenario& s, const std::vector<double>& rho, int v);

// Per-user per-slot throughput R_v = P_v / (P_idle + tau (1 - P_idle)).
double throughput_finite(const Scenario& s, const std::vector<double>& rho, int v);

// Total delivered packets per slot, sum_v N_v R_v.
double aggregate_throughput(const Scenario& s, const std::vector<double>& rho);

// ---- limiting (large-population) quantities ----

// f(gamma) = gamma chi(gamma) e^-gamma / (e^-gamma + tau (1 - e^-gamma)):
// total limiting throughput when the aggregate offered load is gamma.
double f_gamma(const AllOrNothingMpr& m, int tau, double gamma);

struct GammaStar {
  double gamma_star;  // argmax of f on [0, gamma_max]
  double f_max;
  bool scanned = false;  // true when the dense-grid fallback ran (q not covered
                         // by the unimodality condition)
};

// Maximizes f on [0, gamma_max]. Golden-section when the unimodality condition
// holds; otherwise throws Err::non_unimodal unless grid_fallback is set, in
// which case a dense scan + local refinement runs and the result is flagged.
GammaStar find_gamma_star(const AllOrNothingMpr& m, int tau, double gamma_max,
                          bool grid_fallback = false);

// Limiting service rate mu_v(gamma) = p~_v chi(gamma) e^-gamma / (e^-gamma + tau(1-e^-gamma)).
double service_rate(const Scenario& s, int v, double gamma);

// Scaled class-v throughput lim N R_v = rho_v mu_v(gamma(rho)), all-or-nothing model.
double throughput_limiting(const Scenario& s, const std::vector<double>& rho, int v);

// Same for the general symmetric reception model (any MprModel accepted; the
// general law enters through its effective all-or-nothing vector).
double throughput_general_mpr(const Scenario& s, const std::vector<double>& rho, int v);

// ---- equilibrium classification ----

enum class StabilityState { stable, bistable, unstable };

const char* stability_name(StabilityState st);

struct EquilibriumResult {
  StabilityState state = StabilityState::unstable;
  bool multimodal = false;            // grid fallback was used
  std::vector<double> gamma_roots;    // ascending; roots of f(gamma) = lambda kept as solutions
  std::vector<std::vector<double>> rho_solutions;  // one utilization vector per root
  double lambda_total = 0.0;  // lambda = sum beta_v lambda~_v
  double lambda_0 = 0.0;      // f(gamma_0)
  double gamma_0 = 0.0;       // sum beta_v p~_v
  double gamma_star = 0.0;    // argmax of f on [0, gamma_0]
  double f_max = 0.0;
};

struct SolveOptions {
  bool grid_fallback = false;  // allow the dense-scan path for non-chain q
};

// Classifies the offered load and returns every valid equilibrium utilization
// vector (components in [0,1)). Works on either mode; finite scenarios are
// converted through their scaled views.
EquilibriumResult solve_equilibrium(const Scenario& s, SolveOptions opt = {});

// True when the scenario with arrival rates replaced by lambda_tilde is STABLE.
bool stability_region_contains(const Scenario& s, const std::vector<double>& lambda_tilde);

// Damped fixed-point iteration for rho (cross-check oracle, not the primary
// solver). Finite mode iterates the finite formulas; limiting mode iterates
// rho_v <- lambda~_v / mu_v(gamma(rho)). Throws Err::no_convergence at the cap.
std::vector<double> fixed_point_utilization(const Scenario& s, double damping = 0.5,
                                            double tol = 1e-9, int max_iter = 10000);

}  // namespace csma_mpr
