#pragma once
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace csma_mpr {

// Reception model: L concurrent transmissions all decode with probability q_L,
// otherwise none do. q[L-1] holds q_L; multiplicities above q.size() never decode.
struct AllOrNothingMpr {
  std::vector<double> q;

  int max_multiplicity() const { return static_cast<int>(q.size()); }
  // q_L, zero outside 1..M.
  double q_at(int L) const {
    return (L >= 1 && L <= max_multiplicity()) ? q[L - 1] : 0.0;
  }
};

// General symmetric reception model: given L concurrent transmissions, exactly k
// of them decode with probability q_{k,L} (rows[L-1][k-1]); with the remaining
// probability none do. Decoded packets are attributed uniformly at random among
// the L transmitters, so only the counts matter.
struct GeneralSymmetricMpr {
  std::vector<std::vector<double>> rows;  // rows[L-1] = { q_{1,L} .. q_{L,L} }

  int max_multiplicity() const { return static_cast<int>(rows.size()); }
  double q_at(int k, int L) const {
    if (L < 1 || L > max_multiplicity()) return 0.0;
    if (k < 1 || k > L) return 0.0;
    return rows[L - 1][k - 1];
  }
  // E[# decoded | L transmissions] = sum_k k q_{k,L}.
  double mean_decoded(int L) const;
  // All-or-nothing vector with the same per-transmitter success probability:
  // q_L^eff = mean_decoded(L)/L. Exact for limiting-regime throughput (the
  // composition sums collapse onto this vector); the all-or-nothing case maps
  // to itself.
  AllOrNothingMpr effective_all_or_nothing() const;
};

using MprModel = std::variant<AllOrNothingMpr, GeneralSymmetricMpr>;

int mpr_max_multiplicity(const MprModel& m);
// Effective all-or-nothing view of either variant (identity for all-or-nothing).
AllOrNothingMpr mpr_effective(const MprModel& m);

enum class Mode { finite, limiting };

// One user class. Field meaning depends on the scenario mode:
//   finite:   count = N_v users, arrival_rate = lambda_v and tx_prob = p_v
//             (per-slot probabilities in [0,1])
//   limiting: fraction = beta_v, arrival_rate / tx_prob are the scaled rates
//             (N*lambda_v, N*p_v as N -> inf; may exceed 1)
struct ClassSpec {
  std::optional<double> count;
  std::optional<double> fraction;
  double arrival_rate = 0.0;
  double tx_prob = 0.0;
};

struct Scenario {
  Mode mode = Mode::finite;
  std::vector<ClassSpec> classes;
  int kappa = 1;  // slots per packet transmission
  int tau = 1;    // slots per busy period (kappa + fixed overhead), tau >= kappa
  MprModel mpr = AllOrNothingMpr{{1.0}};

  int num_classes() const { return static_cast<int>(classes.size()); }

  // Finite-mode accessors.
  int users(int v) const;    // N_v
  int total_users() const;   // N
  double lambda(int v) const { return classes[v].arrival_rate; }
  double p(int v) const { return classes[v].tx_prob; }

  // Scaled views, valid in both modes (finite mode derives them through N).
  double beta(int v) const;
  double lambda_tilde(int v) const;
  double p_tilde(int v) const;
  double lambda_total() const;  // sum_v beta_v * lambda_tilde_v
  // Aggregate offered load gamma(rho) = sum_v beta_v p~_v rho_v.
  double gamma_of(const std::vector<double>& rho) const;
};

struct Violation {
  std::string field;
  std::string message;
};

// All constraint violations (empty when the scenario is well-formed).
std::vector<Violation> validate_scenario(const Scenario& s);
// Throws Err::config_invalid listing every violation.
void require_valid(const Scenario& s);

// chi(x) = sum_{L=1}^{M} q_L x^{L-1}/(L-1)!
double chi(const AllOrNothingMpr& m, double x);

// Sufficient condition for the rate function f to be unimodal:
// q_1 <= 2 q_2 <= ... <= M q_M; always true for M <= 2.
bool unimodality_condition_holds(const AllOrNothingMpr& m);
// The coefficient chain alone (no M<=2 bypass).
bool q_chain_holds(const AllOrNothingMpr& m);

// Metastability-avoidance check for a finite scenario against a caller-supplied
// threshold gamma_bar: total attempt budget sum_v N_v p_v must stay below
// gamma_bar and the q chain must hold.
bool metastability_avoided(const Scenario& s, double gamma_bar);

}  // namespace csma_mpr
