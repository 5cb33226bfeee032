#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "csma_mpr/model.hpp"

namespace csma_mpr {

// Slot-level simulator of the persistent CSMA protocol with symmetric MPR.
//
// Timing conventions (binding for all reported statistics):
//  * Time advances in unit slots. A super slot is either one idle slot or a
//    busy period of tau consecutive slots starting at its first slot.
//  * The contention decision happens at the super-slot boundary BEFORE that
//    slot's arrivals: each user whose queue is non-empty at the decision
//    instant transmits its head-of-line packet with probability p_v. Packets
//    arriving later in the super slot wait for the next boundary.
//  * Decoding resolves at the end of the tau-th busy slot. All-or-nothing
//    law: all L packets depart with probability q_L, none otherwise. General
//    law: k is drawn from column L of the success-law matrix (residual mass
//    goes to k = 0) and k of the L transmitters are removed uniformly at
//    random.
//  * Delay endpoints: service delay = departure slot - HOL-entry slot + 1,
//    total delay = departure slot - arrival slot + 1, where HOL entry is the
//    first boundary at which the packet heads its queue at the decision
//    instant.
//  * Utilization is sampled at boundaries (pre-arrival); queue backlog for
//    Little's-law accounting is sampled mid-slot (after arrivals, before
//    departures) in every measured slot.
//
// Two delay estimators are reported per class. The slot-timestamp means
// (mean_service_delay / mean_total_delay) difference the recorded slot
// indices: they are the physical per-packet delays and satisfy Little's law
// against the mid-slot backlog exactly. The renewal-normalized means count a
// packet's sojourn in super-slot cycles and convert to slots with the run's
// average super-slot length (plus, for total delay, the leftover slots of
// the arrival super slot); for the total delay each sample is additionally
// weighted by the inverse length of its arrival super slot, so arrivals are
// counted per super slot rather than per slot. Both normalizations match the
// conventions of the analytical delay formulas, which (a) weight every cycle
// by the population-average super-slot length and (b) condition the arrival
// state on the stationary distribution over super slots. The slot-timestamp
// estimator instead reflects two physical effects the formulas average out:
// the length bias that a tagged user's own transmissions (probability p_v,
// not vanishing) induce on its in-queue time — roughly a factor of
// 1 + p_v(tau-1) — and the per-slot length bias of arrivals toward busy
// super slots, which inflates the sampled residual.
//
// Draw order (fixed, so identical (config, seed) gives identical output):
// within one slot, first the contention draws in ascending user index (only
// users with non-empty queues draw), then one arrival draw per user in
// ascending index, then at a decoding instant one outcome draw followed by
// the winner-selection draws. Users are indexed class-major: class 0's users
// first, then class 1's, and so on.
struct SimConfig {
  Scenario scenario;        // finite mode
  long long horizon = 0;    // total slots, including warmup
  long long warmup = -1;    // slots discarded before measurement; -1 = horizon/10
  std::uint64_t seed = 1;
  bool trace = false;       // record one TraceEntry per super slot (post-warmup)
  bool saturated = false;   // every user permanently backlogged; no arrivals,
                            // no queueing statistics (throughput/histogram only)
  // Optional replacement for the q-law outcome draw: given the number of
  // simultaneous transmitters and the run's engine, return how many decode
  // (all-or-nothing hooks return either L or 0). Used to drive the MAC from
  // per-transmission channel samples instead of fixed q values.
  std::function<int(int, std::mt19937_64&)> outcome_hook;
};

struct ClassSimStats {
  long long packets_arrived = 0;    // whole run, warmup included
  long long packets_departed = 0;   // whole run, warmup included
  long long final_backlog = 0;      // queued packets at the horizon
  long long packets_delivered = 0;  // departures inside the measured window
  double throughput = 0;            // delivered per measured slot (class total)
  double throughput_se = 0;
  double utilization_hat = 0;       // fraction of (boundary, user) non-empty
  double utilization_se = 0;
  double mean_service_delay = 0;    // slots; measured deliveries with timestamps
  double service_delay_se = 0;
  double mean_total_delay = 0;      // slots
  double total_delay_se = 0;
  double mean_service_cycles = 0;   // super slots spent at HOL (incl. departure)
  double mean_total_cycles = 0;     // super slots from first post-arrival boundary
  double mean_arrival_residual = 0; // leftover slots of the arrival super slot
  double mean_service_delay_renewal = 0;  // mean_service_cycles * mean cycle length
  double service_delay_renewal_se = 0;
  double mean_total_delay_renewal = 0;    // weighted residual + cycles * length
  double total_delay_renewal_se = 0;
  double mean_backlog = 0;          // mid-slot class backlog per measured slot
  long long delay_samples = 0;      // deliveries contributing delay statistics
};

struct TraceEntry {
  long long slot = 0;       // boundary slot index
  bool busy = false;        // false = idle super slot
  int attempts = 0;         // transmitters in this super slot
  int decoded = 0;          // packets decoded at its end (0 for idle slots)
  long long total_backlog = 0;  // all queued packets at the boundary, pre-arrival
};

struct SimReport {
  std::vector<ClassSimStats> per_class;
  long long measured_slots = 0;
  long long boundaries = 0;               // measured super slots
  double mean_superslot_length = 0;       // measured_slots / boundaries
  double fraction_idle_superslots = 0;
  std::vector<long long> attempt_histogram;  // index L = super slots with L transmitters
  std::vector<std::string> warnings;
  std::vector<TraceEntry> trace;
};

SimReport run_simulation(const SimConfig& cfg);

// Histogram heuristic over the per-boundary total-backlog samples of a trace:
// flags traces whose occupancy concentrates at two separated regions.
struct BimodalityReport {
  bool flag = false;                  // two modes with a deep valley between them
  std::vector<long long> bin_counts;
  long long origin = 0;               // backlog value at the left edge of bin 0
  long long bin_width = 1;
  int mode_bins[2] = {-1, -1};        // the two largest local maxima, if found
  double valley_ratio = 0;            // min count between modes / smaller mode
};

BimodalityReport detect_bimodality(const std::vector<TraceEntry>& trace);

}  // namespace csma_mpr
