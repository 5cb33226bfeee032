#include "csma_mpr/oracle.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <ostream>
#include <unordered_map>
#include <vector>

#include "csma_mpr/errors.hpp"

namespace csma_mpr {
namespace {

constexpr long long kStateCap = 1000000;
constexpr int kDenseCap = 2500;

long long binom(int n, int k) {
  if (k < 0 || k > n) return 0;
  long long r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Static description of a tiny system: flattened users and state encoding.
// States are (queue digits in radix B+1, channel phase). Phase 0 is a
// super-slot boundary; phase code 1 + (S-1)*(tau-1) + (r-1) is a busy period
// with transmitter set S (non-empty user mask) and r in 1..tau-1 slots left.
struct Layout {
  int N = 0, V = 0, B = 0, tau = 0;
  std::vector<int> cls;
  std::vector<double> p_u, lam_u;
  const MprModel* mpr = nullptr;
  long long q_radix = 0;  // (B+1)^N
  int chan_count = 0;

  long long chan_of(long long raw) const { return raw / q_radix; }
  int digit(long long raw, int u) const {
    long long q = raw % q_radix;
    for (int i = 0; i < u; ++i) q /= (B + 1);
    return static_cast<int>(q % (B + 1));
  }
  long long with_digits(const std::vector<int>& q, long long chan) const {
    long long idx = 0;
    for (int u = N - 1; u >= 0; --u) idx = idx * (B + 1) + q[u];
    return chan * q_radix + idx;
  }
  void unpack(long long raw, std::vector<int>& q, int& chan) const {
    chan = static_cast<int>(raw / q_radix);
    long long rest = raw % q_radix;
    for (int u = 0; u < N; ++u) {
      q[u] = static_cast<int>(rest % (B + 1));
      rest /= (B + 1);
    }
  }
  int chan_code(unsigned mask, int r) const {
    return 1 + (static_cast<int>(mask) - 1) * (tau - 1) + (r - 1);
  }
  void chan_decode(int chan, unsigned& mask, int& r) const {
    const int k = chan - 1;
    mask = static_cast<unsigned>(k / (tau - 1)) + 1;
    r = k % (tau - 1) + 1;
  }
};

Layout make_layout(const TinySystem& t) {
  require_valid(t.scenario);
  const Scenario& s = t.scenario;
  if (s.mode != Mode::finite)
    fail(Err::config_invalid, "oracle requires a finite-mode scenario");
  if (t.buffer_cap < 1 || t.buffer_cap > 6)
    fail(Err::state_explosion, "buffer_cap must be in 1..6, got " +
                                   std::to_string(t.buffer_cap));
  Layout lay;
  lay.N = s.total_users();
  lay.V = s.num_classes();
  lay.B = t.buffer_cap;
  lay.tau = s.tau;
  lay.mpr = &s.mpr;
  if (lay.N > 4)
    fail(Err::state_explosion,
         "oracle supports at most 4 users, got " + std::to_string(lay.N));
  long long states = 1;
  for (int u = 0; u < lay.N; ++u) states *= (lay.B + 1);
  lay.q_radix = states;
  const long long chan_bound = 1 + static_cast<long long>(lay.tau) * (1LL << lay.N);
  if (states * chan_bound > kStateCap)
    fail(Err::state_explosion,
         "state bound " + std::to_string(states * chan_bound) + " exceeds " +
             std::to_string(kStateCap));
  lay.chan_count = 1 + (lay.tau > 1 ? ((1 << lay.N) - 1) * (lay.tau - 1) : 0);
  for (int v = 0; v < lay.V; ++v)
    for (int i = 0; i < s.users(v); ++i) {
      lay.cls.push_back(v);
      lay.p_u.push_back(s.p(v));
      lay.lam_u.push_back(s.lambda(v));
    }
  return lay;
}

// Enumerate the MPR outcome for transmitter set T: emit_w(winner_mask, prob).
template <class F>
void for_each_outcome(const Layout& lay, unsigned T, F&& emit_w) {
  const int L = std::popcount(T);
  if (const auto* aon = std::get_if<AllOrNothingMpr>(lay.mpr)) {
    const double qs = aon->q_at(L);
    if (qs > 0.0) emit_w(T, qs);
    if (qs < 1.0) emit_w(0u, 1.0 - qs);
    return;
  }
  const auto& gen = std::get<GeneralSymmetricMpr>(*lay.mpr);
  double residual = 1.0;
  for (int k = 1; k <= L; ++k) {
    const double qk = gen.q_at(k, L);
    if (qk <= 0.0) continue;
    residual -= qk;
    const double per = qk / static_cast<double>(binom(L, k));
    for (unsigned W = T;; W = (W - 1) & T) {
      if (std::popcount(W) == k) emit_w(W, per);
      if (W == 0) break;
    }
  }
  if (residual > 1e-15) emit_w(0u, residual);
}

// Enumerate one protocol slot from (q, chan): contention if at a boundary,
// then arrivals (per-user probabilities in lam, full queues drop), then the
// decode when the busy period ends. Calls emit(next_q, next_chan, prob,
// winner_mask); next_q references a scratch copy, so emit must not retain it.
template <class F>
void for_each_slot_transition(const Layout& lay, const std::vector<double>& lam,
                              std::vector<int> q, int chan, F&& emit) {
  const int N = lay.N;
  // Arrivals enumeration shared by all branches: stochastic users (0<lam<1)
  // each contribute a branch pair; deterministic ones are applied directly.
  std::vector<int> stochastic;
  for (int u = 0; u < N; ++u)
    if (lam[u] > 0.0 && lam[u] < 1.0) stochastic.push_back(u);

  auto apply_arrivals = [&](std::vector<int>& qq, unsigned amask) {
    for (int u = 0; u < N; ++u) {
      const bool comes = lam[u] >= 1.0 || ((amask >> u) & 1u);
      if (comes && qq[u] < lay.B) ++qq[u];
    }
  };
  auto for_each_arrival = [&](auto&& body) {
    const int m = static_cast<int>(stochastic.size());
    for (unsigned bits = 0; bits < (1u << m); ++bits) {
      double pa = 1.0;
      unsigned amask = 0;
      for (int i = 0; i < m; ++i) {
        const int u = stochastic[i];
        if ((bits >> i) & 1u) {
          pa *= lam[u];
          amask |= 1u << u;
        } else {
          pa *= 1.0 - lam[u];
        }
      }
      body(amask, pa);
    }
  };

  auto decode_and_emit = [&](const std::vector<int>& qa, unsigned T, double prob) {
    for_each_outcome(lay, T, [&](unsigned W, double pw) {
      std::vector<int> qd = qa;
      for (int u = 0; u < N; ++u)
        if ((W >> u) & 1u) --qd[u];
      emit(qd, 0, prob * pw, W);
    });
  };

  if (chan == 0) {
    // Boundary: contention among non-empty queues, before arrivals.
    unsigned elig = 0;
    for (int u = 0; u < N; ++u)
      if (q[u] >= 1) elig |= 1u << u;
    for (unsigned T = elig;; T = (T - 1) & elig) {
      double pt = 1.0;
      for (int u = 0; u < N; ++u)
        if ((elig >> u) & 1u) pt *= ((T >> u) & 1u) ? lay.p_u[u] : 1.0 - lay.p_u[u];
      if (pt > 0.0) {
        for_each_arrival([&](unsigned amask, double pa) {
          std::vector<int> qa = q;
          apply_arrivals(qa, amask);
          if (T == 0) {
            emit(qa, 0, pt * pa, 0u);  // idle super slot, one slot long
          } else if (lay.tau == 1) {
            decode_and_emit(qa, T, pt * pa);
          } else {
            emit(qa, lay.chan_code(T, lay.tau - 1), pt * pa, 0u);
          }
        });
      }
      if (T == 0) break;
    }
    return;
  }

  unsigned S;
  int r;
  lay.chan_decode(chan, S, r);
  for_each_arrival([&](unsigned amask, double pa) {
    std::vector<int> qa = q;
    apply_arrivals(qa, amask);
    if (r > 1) {
      emit(qa, lay.chan_code(S, r - 1), pa, 0u);
    } else {
      decode_and_emit(qa, S, pa);
    }
  });
}

// Explicit chain over the states reachable from a seed set.
struct Chain {
  Layout lay;
  std::vector<long long> raw_of;                        // compact -> raw
  std::unordered_map<long long, int> idx_of;            // raw -> compact
  std::vector<std::vector<std::pair<int, double>>> out; // transitions
  std::vector<std::vector<double>> dep_exp;             // E[class departures | state]
  std::vector<double> absorb;                           // tagged chains: exit mass
  int tagged_user = -1;                                 // digit u* = queue position
};

// Build the chain. For tagged chains (tagged_user >= 0) the tagged user's
// digit is its queue position j: its arrivals are disabled and decoding its
// HOL at j == 1 leaves the chain (absorption) instead of emitting a state.
Chain build_chain(const Layout& lay, const std::vector<long long>& seeds,
                  int tagged_user) {
  Chain ch;
  ch.lay = lay;
  ch.tagged_user = tagged_user;
  std::vector<double> lam = lay.lam_u;
  if (tagged_user >= 0) lam[tagged_user] = 0.0;

  std::deque<int> work;
  auto intern = [&](long long raw) {
    auto it = ch.idx_of.find(raw);
    if (it != ch.idx_of.end()) return it->second;
    const int id = static_cast<int>(ch.raw_of.size());
    if (id >= kStateCap)
      fail(Err::state_explosion, "reachable state count exceeds the cap");
    ch.idx_of.emplace(raw, id);
    ch.raw_of.push_back(raw);
    work.push_back(id);
    return id;
  };
  for (long long s : seeds) intern(s);

  std::vector<int> q(lay.N);
  while (!work.empty()) {
    const int id = work.front();
    work.pop_front();
    int chan;
    lay.unpack(ch.raw_of[static_cast<std::size_t>(id)], q, chan);
    std::map<int, double> row;
    std::vector<double> dep(lay.V, 0.0);
    double absorbed = 0.0;
    for_each_slot_transition(
        lay, lam, q, chan,
        [&](const std::vector<int>& nq, int nchan, double prob, unsigned W) {
          if (prob <= 0.0) return;
          for (int u = 0; u < lay.N; ++u)
            if ((W >> u) & 1u) dep[lay.cls[u]] += prob;
          if (tagged_user >= 0 && ((W >> tagged_user) & 1u) &&
              q[tagged_user] == 1) {
            absorbed += prob;  // the tagged packet itself departed
            return;
          }
          row[intern(lay.with_digits(nq, nchan))] += prob;
        });
    if (static_cast<int>(ch.out.size()) <= id) {
      ch.out.resize(ch.raw_of.size());
      ch.dep_exp.resize(ch.raw_of.size());
      ch.absorb.resize(ch.raw_of.size(), 0.0);
    }
    ch.out[static_cast<std::size_t>(id)].assign(row.begin(), row.end());
    ch.dep_exp[static_cast<std::size_t>(id)] = std::move(dep);
    ch.absorb[static_cast<std::size_t>(id)] = absorbed;
  }
  ch.out.resize(ch.raw_of.size());
  ch.dep_exp.resize(ch.raw_of.size());
  ch.absorb.resize(ch.raw_of.size(), 0.0);
  return ch;
}

Chain build_main_chain(const TinySystem& t) {
  const Layout lay = make_layout(t);
  return build_chain(lay, {0}, -1);
}

// True if every state can reach one of the targets (targets given as flags).
bool all_reach(const Chain& ch, const std::vector<char>& target) {
  const std::size_t R = ch.raw_of.size();
  std::vector<std::vector<int>> rev(R);
  for (std::size_t i = 0; i < R; ++i)
    for (const auto& [j, p] : ch.out[i]) rev[static_cast<std::size_t>(j)].push_back(static_cast<int>(i));
  std::vector<char> seen(R, 0);
  std::deque<int> work;
  for (std::size_t i = 0; i < R; ++i)
    if (target[i]) {
      seen[i] = 1;
      work.push_back(static_cast<int>(i));
    }
  while (!work.empty()) {
    const int j = work.front();
    work.pop_front();
    for (int i : rev[static_cast<std::size_t>(j)])
      if (!seen[static_cast<std::size_t>(i)]) {
        seen[static_cast<std::size_t>(i)] = 1;
        work.push_back(i);
      }
  }
  return std::find(seen.begin(), seen.end(), 0) == seen.end();
}

double stationary_residual(const Chain& ch, const std::vector<double>& pi) {
  std::vector<double> next(pi.size(), 0.0);
  for (std::size_t i = 0; i < pi.size(); ++i)
    for (const auto& [j, p] : ch.out[i]) next[static_cast<std::size_t>(j)] += pi[i] * p;
  double r = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) r = std::max(r, std::abs(next[i] - pi[i]));
  return r;
}

std::vector<double> solve_stationary(const Chain& ch) {
  const int R = static_cast<int>(ch.raw_of.size());
  {
    std::vector<char> home(static_cast<std::size_t>(R), 0);
    home[0] = 1;
    if (!all_reach(ch, home))
      fail(Err::reducible, "some reachable state cannot return to the initial state");
  }
  std::vector<double> pi(static_cast<std::size_t>(R), 0.0);
  if (R == 1) {
    pi[0] = 1.0;
    return pi;
  }
  if (R <= kDenseCap) {
    // (P^T - I) pi = 0 with the last balance equation replaced by sum = 1.
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(R, R);
    for (int i = 0; i < R; ++i) {
      for (const auto& [j, p] : ch.out[static_cast<std::size_t>(i)]) A(j, i) += p;
      A(i, i) -= 1.0;
    }
    for (int i = 0; i < R; ++i) A(R - 1, i) = 1.0;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(R);
    b(R - 1) = 1.0;
    Eigen::VectorXd x = Eigen::PartialPivLU<Eigen::MatrixXd>(A).solve(b);
    for (int i = 0; i < R; ++i) pi[static_cast<std::size_t>(i)] = std::max(0.0, x(i));
  } else {
    // Damped power iteration; the damping removes any periodicity.
    std::vector<double> cur(static_cast<std::size_t>(R), 1.0 / R), next(static_cast<std::size_t>(R));
    for (long long it = 0; it < 500000; ++it) {
      std::fill(next.begin(), next.end(), 0.0);
      for (int i = 0; i < R; ++i)
        for (const auto& [j, p] : ch.out[static_cast<std::size_t>(i)])
          next[static_cast<std::size_t>(j)] += cur[static_cast<std::size_t>(i)] * p;
      double delta = 0.0;
      for (int i = 0; i < R; ++i) {
        const double mixed = 0.5 * cur[static_cast<std::size_t>(i)] + 0.5 * next[static_cast<std::size_t>(i)];
        delta = std::max(delta, std::abs(mixed - cur[static_cast<std::size_t>(i)]));
        cur[static_cast<std::size_t>(i)] = mixed;
      }
      if (delta <= 5e-14) break;
    }
    pi = cur;
  }
  double sum = 0.0;
  for (double x : pi) sum += x;
  for (double& x : pi) x /= sum;
  if (stationary_residual(ch, pi) > 1e-12)
    fail(Err::no_convergence, "stationary solve residual above 1e-12");
  return pi;
}

// Solve x = rhs_base + Q x (dense); rows with fixed[i] use x_i = fixed_value[i].
std::vector<double> solve_affine(const Chain& ch, const std::vector<double>& rhs_base,
                                 const std::vector<char>& fixed,
                                 const std::vector<double>& fixed_value) {
  const int R = static_cast<int>(ch.raw_of.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(R, R);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(R);
  for (int i = 0; i < R; ++i) {
    if (fixed[static_cast<std::size_t>(i)]) {
      A(i, i) = 1.0;
      b(i) = fixed_value[static_cast<std::size_t>(i)];
      continue;
    }
    A(i, i) = 1.0;
    for (const auto& [j, p] : ch.out[static_cast<std::size_t>(i)]) A(i, j) -= p;
    b(i) = rhs_base[static_cast<std::size_t>(i)];
  }
  Eigen::VectorXd x = Eigen::PartialPivLU<Eigen::MatrixXd>(A).solve(b);
  std::vector<double> out(static_cast<std::size_t>(R));
  for (int i = 0; i < R; ++i) out[static_cast<std::size_t>(i)] = x(i);
  return out;
}

}  // namespace

std::vector<double> stationary_distribution(const TinySystem& t) {
  const Chain ch = build_main_chain(t);
  return solve_stationary(ch);
}

void dump_transition_matrix(const TinySystem& t, std::ostream& os) {
  const Chain ch = build_main_chain(t);
  os.precision(17);
  for (std::size_t i = 0; i < ch.out.size(); ++i)
    for (const auto& [j, p] : ch.out[i]) os << i << ' ' << j << ' ' << p << '\n';
}

OracleMetrics exact_metrics(const TinySystem& t) {
  const Chain ch = build_main_chain(t);
  const Layout& lay = ch.lay;
  const std::vector<double> pi = solve_stationary(ch);
  const int R = static_cast<int>(ch.raw_of.size());
  const Scenario& s = t.scenario;

  OracleMetrics m;
  m.throughput.assign(static_cast<std::size_t>(lay.V), 0.0);
  m.utilization.assign(static_cast<std::size_t>(lay.V), 0.0);
  m.mean_service_delay.assign(static_cast<std::size_t>(lay.V), 0.0);
  m.mean_total_delay.assign(static_cast<std::size_t>(lay.V), 0.0);
  m.blocking_probability.assign(static_cast<std::size_t>(lay.V), 0.0);
  m.mean_backlog.assign(static_cast<std::size_t>(lay.V), 0.0);

  double boundary_mass = 0.0;
  std::vector<double> nonempty(static_cast<std::size_t>(lay.V), 0.0);
  std::vector<int> q(lay.N);
  for (int i = 0; i < R; ++i) {
    int chan;
    lay.unpack(ch.raw_of[static_cast<std::size_t>(i)], q, chan);
    const double w = pi[static_cast<std::size_t>(i)];
    for (int v = 0; v < lay.V; ++v)
      m.throughput[static_cast<std::size_t>(v)] += w * ch.dep_exp[static_cast<std::size_t>(i)][static_cast<std::size_t>(v)];
    for (int u = 0; u < lay.N; ++u) {
      const int v = lay.cls[u];
      m.mean_backlog[static_cast<std::size_t>(v)] +=
          w * (q[u] + (q[u] < lay.B ? lay.lam_u[static_cast<std::size_t>(u)] : 0.0));
      if (q[u] == lay.B)
        m.blocking_probability[static_cast<std::size_t>(v)] += w / s.users(v);
    }
    if (chan == 0) {
      boundary_mass += w;
      for (int u = 0; u < lay.N; ++u)
        if (q[u] >= 1) nonempty[static_cast<std::size_t>(lay.cls[u])] += w;
    }
  }
  for (int v = 0; v < lay.V; ++v)
    m.utilization[static_cast<std::size_t>(v)] =
        boundary_mass > 0.0 ? nonempty[static_cast<std::size_t>(v)] / (boundary_mass * s.users(v)) : 0.0;

  m.delays_defined = true;
  for (int v = 0; v < lay.V; ++v)
    if (s.lambda(v) <= 0.0) m.delays_defined = false;

  // Tagged-packet absorption delays, one chain per class (users within a
  // class are exchangeable, so the first user represents the class).
  // Classes without arrivals keep zero delays and clear the defined flag.
  for (int v = 0; v < lay.V; ++v) {
    if (s.lambda(v) <= 0.0) continue;
    int ustar = 0;
    while (lay.cls[static_cast<std::size_t>(ustar)] != v) ++ustar;

    // Injection: enumerate the arrival slot of the tagged packet from every
    // stationary state where it is accepted (queue below the cap). The next
    // state, reinterpreted with user ustar's digit as the tagged packet's
    // queue position, seeds the tagged chain.
    std::vector<double> lam_inj = lay.lam_u;
    lam_inj[static_cast<std::size_t>(ustar)] = 1.0;
    struct Arrival {
      long long raw;
      double w;
    };
    std::vector<Arrival> arrivals;
    std::map<long long, double> arrival_mass;
    double wsum = 0.0;
    for (int i = 0; i < R; ++i) {
      const double w0 = pi[static_cast<std::size_t>(i)] * lay.lam_u[static_cast<std::size_t>(ustar)];
      if (w0 <= 0.0) continue;
      int chan;
      lay.unpack(ch.raw_of[static_cast<std::size_t>(i)], q, chan);
      if (q[ustar] >= lay.B) continue;  // blocked arrival
      for_each_slot_transition(
          lay, lam_inj, q, chan,
          [&](const std::vector<int>& nq, int nchan, double prob, unsigned W) {
            (void)W;  // the tagged packet cannot depart in its arrival slot
            if (prob <= 0.0) return;
            arrival_mass[lay.with_digits(nq, nchan)] += w0 * prob;
          });
      wsum += w0;
    }
    for (const auto& [raw, w] : arrival_mass) arrivals.push_back({raw, w});

    std::vector<long long> seeds;
    seeds.reserve(arrivals.size());
    for (const Arrival& a : arrivals) seeds.push_back(a.raw);
    const Chain tch = build_chain(lay, seeds, ustar);
    const int TR = static_cast<int>(tch.raw_of.size());
    if (TR > kDenseCap)
      fail(Err::state_explosion, "tagged chain too large for the dense solve");
    {
      std::vector<char> can_exit(static_cast<std::size_t>(TR), 0);
      for (int i = 0; i < TR; ++i)
        if (tch.absorb[static_cast<std::size_t>(i)] > 0.0) can_exit[static_cast<std::size_t>(i)] = 1;
      if (std::find(can_exit.begin(), can_exit.end(), 1) == can_exit.end() ||
          !all_reach(tch, can_exit))
        fail(Err::reducible, "tagged packet can never depart from some state");
    }

    // D: expected slots from the current slot through the departure slot.
    const std::vector<double> ones(static_cast<std::size_t>(TR), 1.0);
    const std::vector<char> none(static_cast<std::size_t>(TR), 0);
    const std::vector<double> d =
        solve_affine(tch, ones, none, std::vector<double>(static_cast<std::size_t>(TR), 0.0));

    // G: value of D at the first boundary where the tagged packet heads its
    // queue (its HOL-entry slot); harvested, not incremented, elsewhere.
    std::vector<char> at_hol(static_cast<std::size_t>(TR), 0);
    for (int i = 0; i < TR; ++i) {
      const long long raw = tch.raw_of[static_cast<std::size_t>(i)];
      if (lay.chan_of(raw) == 0 && lay.digit(raw, ustar) == 1) at_hol[static_cast<std::size_t>(i)] = 1;
    }
    const std::vector<double> g =
        solve_affine(tch, std::vector<double>(static_cast<std::size_t>(TR), 0.0), at_hol, d);

    double total = 0.0, service = 0.0;
    for (const Arrival& a : arrivals) {
      const int id = tch.idx_of.at(a.raw);
      total += a.w * d[static_cast<std::size_t>(id)];
      service += a.w * g[static_cast<std::size_t>(id)];
    }
    m.mean_total_delay[static_cast<std::size_t>(v)] = 1.0 + total / wsum;
    m.mean_service_delay[static_cast<std::size_t>(v)] = service / wsum;
  }
  return m;
}

}  // namespace csma_mpr
