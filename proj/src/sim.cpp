#include "csma_mpr/sim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include "csma_mpr/errors.hpp"
#include "csma_mpr/rng.hpp"

namespace csma_mpr {

namespace {

struct Packet {
  long long arrival = 0;
  long long hol_entry = -1;   // -1 until the packet heads the queue at a boundary
  long long first_boundary = 0;  // ordinal of its first contention boundary
  long long hol_boundary = 0;    // ordinal of the boundary stamping hol_entry
  long long residual = 0;        // slots left in the arrival super slot
  bool busy_arrival = false;     // arrival super slot was a busy period
};

// Per-user FIFO queue. Timestamps are kept for at most kTrackCap packets; when
// the queue grows beyond that, younger packets are held as a bare count (they
// still occupy the queue for backlog/conservation purposes but contribute no
// delay samples). Tracking resumes only once the untracked tail has drained,
// which preserves FIFO order for the packets that do carry timestamps.
constexpr std::size_t kTrackCap = 50000;

struct UserQueue {
  std::deque<Packet> tracked;
  long long untracked = 0;

  long long size() const { return static_cast<long long>(tracked.size()) + untracked; }
  bool empty() const { return tracked.empty() && untracked == 0; }
  void push(long long slot, long long first_boundary, long long residual, bool busy) {
    if (untracked == 0 && tracked.size() < kTrackCap) {
      tracked.push_back({slot, -1, first_boundary, 0, residual, busy});
    } else {
      ++untracked;
    }
  }
};

constexpr int kBatchTarget = 32;
constexpr std::size_t kTraceCap = 4000000;

// Standard error of the mean across batch means.
double batch_se(const std::vector<double>& means) {
  const std::size_t n = means.size();
  if (n < 2) return 0.0;
  double mean = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double m : means) ss += (m - mean) * (m - mean);
  return std::sqrt(ss / (static_cast<double>(n) * static_cast<double>(n - 1)));
}

// Number of packets decoded out of L simultaneous transmissions.
int draw_outcome(const SimConfig& cfg, int L, std::mt19937_64& rng) {
  if (cfg.outcome_hook) return std::clamp(cfg.outcome_hook(L, rng), 0, L);
  if (const auto* aon = std::get_if<AllOrNothingMpr>(&cfg.scenario.mpr)) {
    return uniform01(rng) < aon->q_at(L) ? L : 0;
  }
  const auto& gen = std::get<GeneralSymmetricMpr>(cfg.scenario.mpr);
  const double u = uniform01(rng);
  double c = 0.0;
  for (int k = 1; k <= L; ++k) {
    c += gen.q_at(k, L);
    if (u < c) return k;
  }
  return 0;  // residual mass
}

}  // namespace

SimReport run_simulation(const SimConfig& cfg) {
  require_valid(cfg.scenario);
  if (cfg.scenario.mode != Mode::finite)
    fail(Err::config_invalid, "simulator requires a finite-mode scenario");
  const long long warmup = cfg.warmup < 0 ? cfg.horizon / 10 : cfg.warmup;
  if (cfg.horizon <= 0 || warmup < 0 || cfg.horizon <= warmup)
    fail(Err::config_invalid, "simulation requires horizon > warmup >= 0");

  const Scenario& s = cfg.scenario;
  const int V = s.num_classes();
  const int N = s.total_users();
  const int tau = s.tau;
  const long long measured_slots = cfg.horizon - warmup;
  const int num_batches = static_cast<int>(std::min<long long>(kBatchTarget, measured_slots));

  // Flatten users class-major.
  std::vector<int> cls(N);
  std::vector<double> p_u(N), lam_u(N);
  {
    int u = 0;
    for (int v = 0; v < V; ++v)
      for (int i = 0; i < s.users(v); ++i, ++u) {
        cls[u] = v;
        p_u[u] = s.p(v);
        lam_u[u] = s.lambda(v);
      }
  }

  std::mt19937_64 rng(cfg.seed);

  std::vector<UserQueue> queue(cfg.saturated ? 0 : N);

  // Full-run counters.
  std::vector<long long> arrived(V, 0), departed(V, 0);

  // Measured-window accumulators.
  std::vector<long long> delivered(V, 0), delay_samples(V, 0);
  std::vector<double> service_sum(V, 0.0), total_sum(V, 0.0);
  std::vector<double> scyc_sum(V, 0.0), tcyc_sum(V, 0.0), resid_sum(V, 0.0);
  // Renewal-measure (super-slot-uniform) arrival weighting for the total
  // delay: each sample is weighted by the inverse length of its arrival
  // super slot so arrivals count per super slot rather than per slot.
  std::vector<double> wsum(V, 0.0), wresid_sum(V, 0.0), wtcyc_sum(V, 0.0);
  std::vector<long long> nonempty_sum(V, 0);  // sum over boundaries of non-empty users
  std::vector<double> backlog_sum(V, 0.0);    // mid-slot class backlog
  long long boundaries = 0, idle_boundaries = 0;
  std::vector<long long> hist(static_cast<std::size_t>(N) + 1, 0);

  // Per-batch accumulators for standard errors.
  std::vector<std::vector<long long>> b_delivered(V, std::vector<long long>(num_batches, 0));
  std::vector<std::vector<long long>> b_nonempty(V, std::vector<long long>(num_batches, 0));
  std::vector<long long> b_boundaries(num_batches, 0);
  std::vector<long long> b_slots(num_batches, 0);
  std::vector<std::vector<double>> b_service(V, std::vector<double>(num_batches, 0.0));
  std::vector<std::vector<double>> b_total(V, std::vector<double>(num_batches, 0.0));
  std::vector<std::vector<double>> b_scyc(V, std::vector<double>(num_batches, 0.0));
  std::vector<std::vector<double>> b_tcyc(V, std::vector<double>(num_batches, 0.0));
  std::vector<std::vector<double>> b_resid(V, std::vector<double>(num_batches, 0.0));
  std::vector<std::vector<double>> b_w(V, std::vector<double>(num_batches, 0.0));
  std::vector<std::vector<double>> b_wresid(V, std::vector<double>(num_batches, 0.0));
  std::vector<std::vector<double>> b_wtcyc(V, std::vector<double>(num_batches, 0.0));
  std::vector<std::vector<long long>> b_delay_n(V, std::vector<long long>(num_batches, 0));

  auto batch_of = [&](long long slot) {
    long long b = ((slot - warmup) * num_batches) / measured_slots;
    return static_cast<int>(std::min<long long>(b, num_batches - 1));
  };

  SimReport rep;
  rep.per_class.resize(V);
  bool trace_truncated = false;

  std::vector<int> attempts;       // user indices transmitting in the current super slot
  attempts.reserve(N);
  std::vector<int> winners;
  winners.reserve(N);
  long long busy_left = 0;         // slots remaining in the current super slot
  long long boundary_ordinal = 0;  // 1-based index of the current super slot
  bool decoding_pending = false;   // true while inside a busy (non-idle) super slot
  std::ptrdiff_t open_trace = -1;  // trace entry awaiting its decode count

  for (long long slot = 0; slot < cfg.horizon; ++slot) {
    const bool measured = slot >= warmup;
    const int batch = measured ? batch_of(slot) : 0;
    if (measured) ++b_slots[batch];

    if (busy_left == 0) {
      // Super-slot boundary: stamp HOL entries, sample utilization, contend.
      ++boundary_ordinal;
      attempts.clear();
      long long backlog_now = 0;
      if (cfg.saturated) {
        for (int u = 0; u < N; ++u)
          if (uniform01(rng) < p_u[u]) attempts.push_back(u);
      } else {
        for (int u = 0; u < N; ++u) {
          UserQueue& q = queue[u];
          if (q.empty()) continue;
          backlog_now += q.size();
          if (!q.tracked.empty() && q.tracked.front().hol_entry < 0) {
            q.tracked.front().hol_entry = slot;
            q.tracked.front().hol_boundary = boundary_ordinal;
          }
          if (measured) ++nonempty_sum[cls[u]], ++b_nonempty[cls[u]][batch];
          if (uniform01(rng) < p_u[u]) attempts.push_back(u);
        }
      }
      const int L = static_cast<int>(attempts.size());
      if (measured) {
        ++boundaries;
        ++b_boundaries[batch];
        ++hist[L];
        if (L == 0) ++idle_boundaries;
        if (cfg.trace) {
          if (rep.trace.size() < kTraceCap) {
            rep.trace.push_back({slot, L > 0, L, 0, backlog_now});
            open_trace = L > 0 ? static_cast<std::ptrdiff_t>(rep.trace.size()) - 1 : -1;
          } else {
            trace_truncated = true;
            open_trace = -1;
          }
        }
      } else {
        open_trace = -1;
      }
      busy_left = L == 0 ? 1 : tau;
      decoding_pending = L > 0;
    }

    if (!cfg.saturated) {
      // Arrivals: every user, every slot, after the boundary decision.
      for (int u = 0; u < N; ++u)
        if (uniform01(rng) < lam_u[u]) {
          queue[u].push(slot, boundary_ordinal + 1, busy_left - 1, decoding_pending);
          ++arrived[cls[u]];
        }
      // Mid-slot backlog sample (after arrivals, before departures).
      if (measured)
        for (int u = 0; u < N; ++u) backlog_sum[cls[u]] += static_cast<double>(queue[u].size());
    }

    --busy_left;
    if (busy_left == 0 && decoding_pending) {
      // End of the tau-th busy slot: resolve the MPR outcome.
      const int L = static_cast<int>(attempts.size());
      const int k = draw_outcome(cfg, L, rng);
      winners = attempts;
      if (k < L && k > 0) {
        for (int i = 0; i < k; ++i) {
          const int j = i + static_cast<int>(uniform01(rng) * static_cast<double>(L - i));
          std::swap(winners[i], winners[j]);
        }
      }
      for (int i = 0; i < k; ++i) {
        const int u = winners[i];
        const int v = cls[u];
        if (cfg.saturated) {
          ++departed[v];
          if (measured) ++delivered[v], ++b_delivered[v][batch];
          continue;
        }
        UserQueue& q = queue[u];
        ++departed[v];
        if (measured) ++delivered[v], ++b_delivered[v][batch];
        if (!q.tracked.empty()) {
          const Packet pkt = q.tracked.front();
          q.tracked.pop_front();
          if (measured) {
            const double service = static_cast<double>(slot - pkt.hol_entry + 1);
            const double total = static_cast<double>(slot - pkt.arrival + 1);
            const double scyc = static_cast<double>(boundary_ordinal - pkt.hol_boundary + 1);
            const double tcyc = static_cast<double>(boundary_ordinal - pkt.first_boundary + 1);
            const double resid = static_cast<double>(pkt.residual);
            const double w = pkt.busy_arrival ? 1.0 / static_cast<double>(tau) : 1.0;
            ++delay_samples[v];
            service_sum[v] += service;
            total_sum[v] += total;
            scyc_sum[v] += scyc;
            tcyc_sum[v] += tcyc;
            resid_sum[v] += resid;
            wsum[v] += w;
            wresid_sum[v] += w * resid;
            wtcyc_sum[v] += w * tcyc;
            b_service[v][batch] += service;
            b_total[v][batch] += total;
            b_scyc[v][batch] += scyc;
            b_tcyc[v][batch] += tcyc;
            b_resid[v][batch] += resid;
            b_w[v][batch] += w;
            b_wresid[v][batch] += w * resid;
            b_wtcyc[v][batch] += w * tcyc;
            ++b_delay_n[v][batch];
          }
        } else {
          --q.untracked;  // timestamp was shed at the tracking cap
        }
      }
      if (open_trace >= 0) rep.trace[static_cast<std::size_t>(open_trace)].decoded = k;
      decoding_pending = false;
    }
  }

  rep.measured_slots = measured_slots;
  rep.boundaries = boundaries;
  rep.mean_superslot_length =
      boundaries > 0 ? static_cast<double>(measured_slots) / static_cast<double>(boundaries) : 0.0;
  rep.fraction_idle_superslots =
      boundaries > 0 ? static_cast<double>(idle_boundaries) / static_cast<double>(boundaries) : 0.0;
  rep.attempt_histogram = std::move(hist);
  if (trace_truncated)
    rep.warnings.push_back("trace truncated at " + std::to_string(kTraceCap) + " super slots");

  for (int v = 0; v < V; ++v) {
    ClassSimStats& c = rep.per_class[v];
    c.packets_arrived = arrived[v];
    c.packets_departed = departed[v];
    c.packets_delivered = delivered[v];
    c.delay_samples = delay_samples[v];
    c.throughput = static_cast<double>(delivered[v]) / static_cast<double>(measured_slots);
    c.mean_backlog = backlog_sum[v] / static_cast<double>(measured_slots);
    if (!cfg.saturated) {
      long long backlog = 0;
      int u0 = 0;
      for (int w = 0; w < v; ++w) u0 += s.users(w);
      for (int i = 0; i < s.users(v); ++i) backlog += queue[u0 + i].size();
      c.final_backlog = backlog;
    }

    std::vector<double> m;
    for (int b = 0; b < num_batches; ++b)
      if (b_slots[b] > 0)
        m.push_back(static_cast<double>(b_delivered[v][b]) / static_cast<double>(b_slots[b]));
    c.throughput_se = batch_se(m);

    if (cfg.saturated) {
      c.utilization_hat = 1.0;
    } else {
      const double denom = static_cast<double>(boundaries) * s.users(v);
      c.utilization_hat = denom > 0 ? static_cast<double>(nonempty_sum[v]) / denom : 0.0;
      m.clear();
      for (int b = 0; b < num_batches; ++b)
        if (b_boundaries[b] > 0)
          m.push_back(static_cast<double>(b_nonempty[v][b]) /
                      (static_cast<double>(b_boundaries[b]) * s.users(v)));
      c.utilization_se = batch_se(m);
    }

    if (delay_samples[v] > 0) {
      const double n = static_cast<double>(delay_samples[v]);
      const double len = rep.mean_superslot_length;
      c.mean_service_delay = service_sum[v] / n;
      c.mean_total_delay = total_sum[v] / n;
      c.mean_service_cycles = scyc_sum[v] / n;
      c.mean_total_cycles = tcyc_sum[v] / n;
      c.mean_arrival_residual = resid_sum[v] / n;
      c.mean_service_delay_renewal = c.mean_service_cycles * len;
      c.mean_total_delay_renewal = (wresid_sum[v] + wtcyc_sum[v] * len) / wsum[v];
      m.clear();
      std::vector<double> mt, ms, mr;
      for (int b = 0; b < num_batches; ++b)
        if (b_delay_n[v][b] > 0) {
          const double bn = static_cast<double>(b_delay_n[v][b]);
          m.push_back(b_service[v][b] / bn);
          mt.push_back(b_total[v][b] / bn);
          ms.push_back(b_scyc[v][b] / bn * len);
          mr.push_back((b_wresid[v][b] + b_wtcyc[v][b] * len) / b_w[v][b]);
        }
      c.service_delay_se = batch_se(m);
      c.total_delay_se = batch_se(mt);
      c.service_delay_renewal_se = batch_se(ms);
      c.total_delay_renewal_se = batch_se(mr);
    }

    const bool active = cfg.saturated || s.lambda(v) > 0.0;
    if (active && delivered[v] < 100)
      rep.warnings.push_back("class " + std::to_string(v) + " delivered only " +
                             std::to_string(delivered[v]) +
                             " packets in the measured window; statistics unreliable");
  }
  return rep;
}

BimodalityReport detect_bimodality(const std::vector<TraceEntry>& trace) {
  BimodalityReport rep;
  if (trace.empty()) return rep;
  long long lo = trace.front().total_backlog, hi = lo;
  for (const TraceEntry& t : trace) {
    lo = std::min(lo, t.total_backlog);
    hi = std::max(hi, t.total_backlog);
  }
  const long long span = hi - lo + 1;
  rep.origin = lo;
  rep.bin_width = std::max<long long>(1, (span + 63) / 64);
  const int nbins = static_cast<int>((span + rep.bin_width - 1) / rep.bin_width);
  rep.bin_counts.assign(nbins, 0);
  for (const TraceEntry& t : trace)
    ++rep.bin_counts[static_cast<std::size_t>((t.total_backlog - lo) / rep.bin_width)];

  // Local maxima, collapsing plateaus to their first bin.
  std::vector<int> peaks;
  for (int i = 0; i < nbins; ++i) {
    const long long c = rep.bin_counts[i];
    if (c == 0) continue;
    int j = i;
    while (j + 1 < nbins && rep.bin_counts[j + 1] == c) ++j;
    const bool rise = i == 0 || rep.bin_counts[i - 1] < c;
    const bool fall = j == nbins - 1 || rep.bin_counts[j + 1] < c;
    if (rise && fall) peaks.push_back(i);
    i = j;
  }
  if (peaks.size() < 2) return rep;

  // The two tallest peaks, then the deepest valley strictly between them.
  std::sort(peaks.begin(), peaks.end(), [&](int a, int b) {
    return rep.bin_counts[a] > rep.bin_counts[b];
  });
  int m0 = peaks[0], m1 = peaks[1];
  if (m0 > m1) std::swap(m0, m1);
  rep.mode_bins[0] = m0;
  rep.mode_bins[1] = m1;
  long long valley = rep.bin_counts[m0];
  for (int i = m0 + 1; i < m1; ++i) valley = std::min(valley, rep.bin_counts[i]);
  const long long smaller = std::min(rep.bin_counts[m0], rep.bin_counts[m1]);
  rep.valley_ratio = smaller > 0 ? static_cast<double>(valley) / static_cast<double>(smaller) : 1.0;
  rep.flag = m1 > m0 + 1 && rep.valley_ratio < 0.5;
  return rep;
}

}  // namespace csma_mpr
