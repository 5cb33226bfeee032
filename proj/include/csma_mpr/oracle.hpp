#pragma once

#include <iosfwd>
#include <vector>

#include "csma_mpr/model.hpp"

namespace csma_mpr {

// Exact evaluation of tiny finite systems by enumerating the full Markov
// chain over (per-user queue lengths, channel phase) and solving for its
// stationary distribution. The chain follows the simulator's slot semantics
// exactly: contention at super-slot boundaries before that slot's arrivals,
// arrivals in every slot, decoding at the end of the tau-th busy slot.
//
// The only departure from the simulator is the buffer: each queue is capped
// at buffer_cap packets and arrivals to a full queue are dropped (loss
// truncation), with the loss rate reported so callers can verify it is
// negligible for the regime under study.
struct TinySystem {
  Scenario scenario;   // finite mode, at most 4 users in total
  int buffer_cap = 4;  // per-user queue capacity, 1..6
};

struct OracleMetrics {
  std::vector<double> throughput;           // class deliveries per slot
  std::vector<double> utilization;          // P(queue non-empty at a boundary)
  std::vector<double> mean_service_delay;   // slots, departure - HOL entry + 1
  std::vector<double> mean_total_delay;     // slots, departure - arrival + 1
  std::vector<double> blocking_probability; // P(offered arrival is dropped)
  std::vector<double> mean_backlog;         // mid-slot queued packets, class total
  bool delays_defined = false;              // false if some class never arrives
};

// Stationary law over the states reachable from the all-empty idle state,
// in the oracle's internal state order (index 0 = the all-empty state).
// Solved to residual <= 1e-12 (dense LU, iterative fallback for big chains).
// Errors: STATE_EXPLOSION when the state space exceeds the supported size,
// REDUCIBLE when the reachable set is not a single recurrent class.
std::vector<double> stationary_distribution(const TinySystem& t);

// Expectations under the stationary law. Delays use the tagged-packet
// absorption formulation (expected slots until the tagged packet departs)
// with the same endpoint conventions as the simulator's slot-timestamp
// estimators. Classes with zero arrival rate report zero delays and clear
// delays_defined.
OracleMetrics exact_metrics(const TinySystem& t);

// Debug dump of the reachable transition matrix, one "row col probability"
// triplet per line, indices matching stationary_distribution's order.
void dump_transition_matrix(const TinySystem& t, std::ostream& os);

}  // namespace csma_mpr
