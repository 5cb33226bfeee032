#include "csma_mpr/meanfield.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "csma_mpr/errors.hpp"

namespace csma_mpr {

namespace {

// Binom(N, n; x) evaluated stably for large N and small n.
double binom_pmf(int N, int n, double x) {
  if (n < 0 || n > N) return 0.0;
  if (x <= 0.0) return n == 0 ? 1.0 : 0.0;
  if (x >= 1.0) return n == N ? 1.0 : 0.0;
  double t = std::pow(1.0 - x, N - n);
  for (int i = 0; i < n; ++i) t *= (N - i) * x / (i + 1);
  return t;
}

double busy_denominator(int tau, double p_idle) { return p_idle + tau * (1.0 - p_idle); }

const AllOrNothingMpr& require_all_or_nothing(const Scenario& s, const char* who) {
  const auto* a = std::get_if<AllOrNothingMpr>(&s.mpr);
  if (!a)
    fail(Err::config_invalid,
         std::string(who) + " expects the all-or-nothing reception model "
                            "(use throughput_general_mpr for the general law)");
  return *a;
}

void require_rho(const Scenario& s, const std::vector<double>& rho) {
  if (static_cast<int>(rho.size()) != s.num_classes())
    fail(Err::config_invalid, "probability vector length must match the class count");
  for (double r : rho)
    if (!(r >= 0.0 && r <= 1.0))
      fail(Err::config_invalid, "probability components must lie in [0,1]");
}

}  // namespace

const char* stability_name(StabilityState st) {
  switch (st) {
    case StabilityState::stable: return "STABLE";
    case StabilityState::bistable: return "BISTABLE";
    case StabilityState::unstable: return "UNSTABLE";
  }
  return "?";
}

double p_idle_attempt(const Scenario& s, const std::vector<double>& x) {
  require_rho(s, x);
  double prod = 1.0;
  for (int v = 0; v < s.num_classes(); ++v)
    prod *= std::pow(1.0 - x[v], s.users(v));
  return prod;
}

double p_idle_finite(const Scenario& s, const std::vector<double>& rho) {
  require_rho(s, rho);
  std::vector<double> x(rho.size());
  for (int v = 0; v < s.num_classes(); ++v) x[v] = rho[v] * s.p(v);
  return p_idle_attempt(s, x);
}

double p_succ_attempt(const Scenario& s, const std::vector<double>& x, int v) {
  require_rho(s, x);
  const auto& q = require_all_or_nothing(s, "p_succ_attempt");
  const int V = s.num_classes();
  const int M = q.max_multiplicity();

  // Truncated binomial weights per class; attempts beyond min(M, N_u) cannot
  // contribute since the total must stay <= M for any packet to decode.
  std::vector<std::vector<double>> pmf(V);
  for (int u = 0; u < V; ++u) {
    const int cap = std::min(M, s.users(u));
    pmf[u].resize(cap + 1);
    for (int n = 0; n <= cap; ++n) pmf[u][n] = binom_pmf(s.users(u), n, x[u]);
  }

  const double Nv = s.users(v);
  if (Nv == 0) return 0.0;
  double total = 0.0;
  // Depth-first over transmitter counts (n_0..n_{V-1}) with running product.
  std::vector<int> n(V, 0);
  auto rec = [&](auto&& self, int u, int sum, double w) -> void {
    if (u == V) {
      if (sum >= 1) total += w * q.q_at(sum) * (n[v] / Nv);
      return;
    }
    const int cap = std::min<int>(pmf[u].size() - 1, M - sum);
    for (int k = 0; k <= cap; ++k) {
      n[u] = k;
      self(self, u + 1, sum + k, w * pmf[u][k]);
    }
    n[u] = 0;
  };
  rec(rec, 0, 0, 1.0);
  return total;
}

double p_succ_finite(const Scenario& s, const std::vector<double>& rho, int v) {
  require_rho(s, rho);
  std::vector<double> x(rho.size());
  for (int u = 0; u < s.num_classes(); ++u) x[u] = rho[u] * s.p(u);
  return p_succ_attempt(s, x, v);
}

double throughput_finite(const Scenario& s, const std::vector<double>& rho, int v) {
  const double den = busy_denominator(s.tau, p_idle_finite(s, rho));
  return p_succ_finite(s, rho, v) / den;
}

double aggregate_throughput(const Scenario& s, const std::vector<double>& rho) {
  if (s.mode != Mode::finite)
    fail(Err::config_invalid, "aggregate_throughput is a finite-population quantity");
  const double den = busy_denominator(s.tau, p_idle_finite(s, rho));
  double total = 0.0;
  for (int v = 0; v < s.num_classes(); ++v)
    total += s.users(v) * p_succ_finite(s, rho, v) / den;
  return total;
}

double f_gamma(const AllOrNothingMpr& m, int tau, double gamma) {
  const double e = std::exp(-gamma);
  return gamma * chi(m, gamma) * e / (e + tau * (1.0 - e));
}

namespace {

// Golden-section maximizer for a function known to be unimodal on [a, b].
// Runs to bracket collapse (well past the 1e-10 requirement) within a 200-step cap.
template <class F>
double golden_max(F&& f, double a, double b) {
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - r * (b - a);
  double x2 = a + r * (b - a);
  double f1 = f(x1), f2 = f(x2);
  const double tol = 1e-12 * std::max(1.0, b);
  for (int it = 0; it < 200 && (b - a) > tol; ++it) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + r * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - r * (b - a);
      f1 = f(x1);
    }
  }
  return 0.5 * (a + b);
}

// Sign of f'(gamma), computed in closed form. Writing n for the numerator of f
// and d for its denominator, sign(f') = sign(n'd - nd'); factoring out e^-gamma
// leaves (nt' - nt) d - (tau-1) e^-gamma nt with nt = sum q_L gamma^L/(L-1)!.
double f_slope_sign(const AllOrNothingMpr& m, int tau, double gamma) {
  const double e = std::exp(-gamma);
  const double d = tau - (tau - 1.0) * e;
  double nt = 0.0, ntp = 0.0;  // nt and its derivative
  double pow_term = gamma;     // gamma^L / (L-1)!
  double pow_dterm = 1.0;      // L gamma^{L-1} / (L-1)!
  for (int L = 1; L <= m.max_multiplicity(); ++L) {
    nt += m.q[L - 1] * pow_term;
    ntp += m.q[L - 1] * pow_dterm;
    pow_dterm = pow_term * (L + 1) / L;
    pow_term = pow_term * gamma / L;
  }
  return (ntp - nt) * d - (tau - 1.0) * e * nt;
}

// Polish a golden-section maximizer estimate by bisecting the sign of f'
// inside [lo, hi]; golden section alone bottoms out near sqrt(eps) in the
// argument because it only compares nearly-equal function values.
double polish_max(const AllOrNothingMpr& m, int tau, double lo, double hi,
                  double fallback) {
  double sl = f_slope_sign(m, tau, lo);
  double sh = f_slope_sign(m, tau, hi);
  if (!(sl > 0.0) || !(sh < 0.0)) return fallback;  // not a clean bracket
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (f_slope_sign(m, tau, mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// Root of f(gamma) = target on a monotone bracket. `increasing` describes f on
// [lo, hi]. Bisection runs to bracket collapse (<= 200 steps).
double bisect_monotone(const AllOrNothingMpr& m, int tau, double lo, double hi, double target,
                       bool increasing) {
  double flo = f_gamma(m, tau, lo) - target;
  double fhi = f_gamma(m, tau, hi) - target;
  if (!std::isfinite(flo) || !std::isfinite(fhi))
    fail(Err::no_convergence, "rate function evaluated non-finite during root bracketing");
  const double lo_sided = increasing ? flo : -flo;
  const double hi_sided = increasing ? fhi : -fhi;
  // Expect the value below target at the "low" side and above at the "high" side;
  // tolerate tiny sign slips at the endpoints (they mean the root sits there).
  if (lo_sided > 0.0) {
    if (lo_sided < 1e-9) return lo;
    fail(Err::no_convergence, "root bracket invalid at lower end");
  }
  if (hi_sided < 0.0) {
    if (hi_sided > -1e-9) return hi;
    fail(Err::no_convergence, "root bracket invalid at upper end");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double fm = f_gamma(m, tau, mid) - target;
    if (!std::isfinite(fm)) fail(Err::no_convergence, "rate function evaluated non-finite");
    const bool below = increasing ? (fm < 0.0) : (fm > 0.0);
    if (below)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

GammaStar find_gamma_star(const AllOrNothingMpr& m, int tau, double gamma_max,
                          bool grid_fallback) {
  if (!(gamma_max >= 0.0) || !std::isfinite(gamma_max))
    fail(Err::config_invalid, "gamma_max must be finite and >= 0");
  if (tau < 1) fail(Err::config_invalid, "tau must be >= 1");
  if (gamma_max == 0.0) return {0.0, 0.0, false};

  auto f = [&](double g) { return f_gamma(m, tau, g); };
  // f is strictly decreasing past M (every numerator term carries a factor
  // L - gamma <= M - gamma while the denominator grows), so the maximizer
  // never exceeds M; shrinking the bracket keeps full resolution when
  // gamma_max is large.
  const double hi = std::min(gamma_max, static_cast<double>(m.max_multiplicity()));

  if (!unimodality_condition_holds(m)) {
    if (!grid_fallback)
      fail(Err::non_unimodal,
           "q vector violates the unimodality chain; enable the grid fallback to proceed");
    // Dense scan, then local refinement around the best grid point.
    const int n = 100000;
    int best_i = 0;
    double best_f = f(0.0);
    for (int i = 1; i <= n; ++i) {
      const double g = hi * i / n;
      const double fg = f(g);
      if (fg > best_f) {
        best_f = fg;
        best_i = i;
      }
    }
    const double lo_b = hi * std::max(0, best_i - 1) / n;
    const double hi_b = hi * std::min(n, best_i + 1) / n;
    double g = golden_max(f, lo_b, hi_b);
    g = polish_max(m, tau, lo_b, hi_b, g);
    return {g, f(g), true};
  }

  double g = golden_max(f, 0.0, hi);
  if (f_slope_sign(m, tau, hi) >= 0.0) return {hi, f(hi), false};  // rising at the edge
  const double w = 1e-5 * std::max(1.0, hi);
  g = polish_max(m, tau, std::max(0.0, g - w), std::min(hi, g + w), g);
  return {g, f(g), false};
}

double service_rate(const Scenario& s, int v, double gamma) {
  const AllOrNothingMpr q = mpr_effective(s.mpr);
  const double e = std::exp(-gamma);
  return s.p_tilde(v) * chi(q, gamma) * e / (e + s.tau * (1.0 - e));
}

double throughput_limiting(const Scenario& s, const std::vector<double>& rho, int v) {
  require_rho(s, rho);
  const auto& q = require_all_or_nothing(s, "throughput_limiting");
  const double gamma = s.gamma_of(rho);
  const double e = std::exp(-gamma);
  return rho[v] * s.p_tilde(v) * chi(q, gamma) * e / (e + s.tau * (1.0 - e));
}

double throughput_general_mpr(const Scenario& s, const std::vector<double>& rho, int v) {
  require_rho(s, rho);
  const AllOrNothingMpr q = mpr_effective(s.mpr);
  const double gamma = s.gamma_of(rho);
  const double e = std::exp(-gamma);
  return rho[v] * s.p_tilde(v) * chi(q, gamma) * e / (e + s.tau * (1.0 - e));
}

EquilibriumResult solve_equilibrium(const Scenario& s, SolveOptions opt) {
  require_valid(s);
  const AllOrNothingMpr q = mpr_effective(s.mpr);
  const int V = s.num_classes();
  const int tau = s.tau;

  EquilibriumResult res;
  res.lambda_total = s.lambda_total();
  res.gamma_0 = s.gamma_of(std::vector<double>(V, 1.0));
  const double lambda = res.lambda_total;

  auto rho_of = [&](double gamma) {
    std::vector<double> rho(V);
    for (int v = 0; v < V; ++v) {
      const double lt = s.lambda_tilde(v);
      if (lt == 0.0) {
        rho[v] = 0.0;
        continue;
      }
      rho[v] = lt / service_rate(s, v, gamma);  // may land outside [0,1)
    }
    return rho;
  };
  // A candidate is a fixed point only when every component is a probability
  // strictly below saturation (1e-9 slack against roundoff).
  auto valid = [&](const std::vector<double>& rho) {
    for (double r : rho)
      if (!std::isfinite(r) || r < 0.0 || r >= 1.0 - 1e-9) return false;
    return true;
  };

  if (res.gamma_0 <= 0.0) {
    // Nobody ever transmits; only the empty system is stable.
    if (lambda == 0.0) {
      res.state = StabilityState::stable;
      res.gamma_roots = {0.0};
      res.rho_solutions = {std::vector<double>(V, 0.0)};
    } else {
      res.state = StabilityState::unstable;
    }
    return res;
  }

  const bool unimodal = unimodality_condition_holds(q);
  if (!unimodal && !opt.grid_fallback)
    fail(Err::non_unimodal,
         "q vector violates the unimodality chain; enable the grid fallback to proceed");

  if (!unimodal) {
    // Dense-scan path: enumerate every crossing of f(gamma) = lambda on [0, gamma_0].
    res.multimodal = true;
    auto gs = find_gamma_star(q, tau, res.gamma_0, true);
    res.gamma_star = gs.gamma_star;
    res.f_max = gs.f_max;
    res.lambda_0 = f_gamma(q, tau, res.gamma_0);
    if (lambda == 0.0) {
      res.state = StabilityState::stable;
      res.gamma_roots = {0.0};
      res.rho_solutions = {std::vector<double>(V, 0.0)};
      return res;
    }
    // Crossings can only occur below M (f is strictly decreasing beyond), so
    // scan [0, min(gamma_0, M)] densely and treat any remaining tail with a
    // single monotone bisection.
    const double scan_hi =
        std::min(res.gamma_0, static_cast<double>(q.max_multiplicity()));
    const int n = 100000;
    std::vector<double> roots;
    double prev_g = 0.0;
    double prev = f_gamma(q, tau, 0.0) - lambda;
    for (int i = 1; i <= n; ++i) {
      const double g = scan_hi * i / n;
      const double cur = f_gamma(q, tau, g) - lambda;
      if ((prev <= 0.0 && cur > 0.0) || (prev >= 0.0 && cur < 0.0)) {
        const bool increasing = cur > prev;
        roots.push_back(bisect_monotone(q, tau, prev_g, g, lambda, increasing));
      }
      prev_g = g;
      prev = cur;
    }
    if (res.gamma_0 > scan_hi && prev > 0.0 &&
        f_gamma(q, tau, res.gamma_0) - lambda < 0.0)
      roots.push_back(bisect_monotone(q, tau, scan_hi, res.gamma_0, lambda, false));
    std::vector<double> kept_roots;
    std::vector<std::vector<double>> kept_rho;
    for (double g : roots) {
      auto rho = rho_of(g);
      if (valid(rho)) {
        kept_roots.push_back(g);
        kept_rho.push_back(std::move(rho));
      }
    }
    if (kept_roots.empty()) {
      res.state = StabilityState::unstable;
    } else if (kept_roots.size() == 1) {
      res.state = StabilityState::stable;
      res.gamma_roots = kept_roots;
      res.rho_solutions = kept_rho;
    } else {
      // Report the extreme operating points.
      res.state = StabilityState::bistable;
      res.gamma_roots = {kept_roots.front(), kept_roots.back()};
      res.rho_solutions = {kept_rho.front(), kept_rho.back()};
    }
    return res;
  }

  auto gs = find_gamma_star(q, tau, res.gamma_0, false);
  res.gamma_star = gs.gamma_star;
  res.f_max = gs.f_max;
  res.lambda_0 = f_gamma(q, tau, res.gamma_0);

  if (lambda == 0.0) {
    res.state = StabilityState::stable;
    res.gamma_roots = {0.0};
    res.rho_solutions = {std::vector<double>(V, 0.0)};
    return res;
  }

  const double eq_tol = 1e-12;  // lambda == lambda_0 routes to the two-root branch
  if (lambda < res.lambda_0 - eq_tol) {
    // Unique crossing on the rising branch [0, min(gamma*, gamma_0)].
    const double hi = std::min(res.gamma_star, res.gamma_0);
    const double root = bisect_monotone(q, tau, 0.0, hi, lambda, true);
    auto rho = rho_of(root);
    if (valid(rho)) {
      res.state = StabilityState::stable;
      res.gamma_roots = {root};
      res.rho_solutions = {std::move(rho)};
    } else {
      // lambda clears f but some class cannot reach its arrival rate with a
      // utilization below 1: no fixed point exists in [0,1)^V.
      res.state = StabilityState::unstable;
    }
    return res;
  }

  // lambda >= lambda_0. With the peak at the right edge f never returns to
  // lambda inside the interval: unstable.
  const double edge_tol = 1e-7 * std::max(1.0, res.gamma_0);
  const bool interior_peak = res.gamma_star < res.gamma_0 - edge_tol;
  if (!interior_peak || lambda > res.f_max) {
    res.state = StabilityState::unstable;
    return res;
  }

  const double g_lo = bisect_monotone(q, tau, 0.0, res.gamma_star, lambda, true);
  const double g_hi = bisect_monotone(q, tau, res.gamma_star, res.gamma_0, lambda, false);
  auto rho_lo = rho_of(g_lo);
  auto rho_hi = rho_of(g_hi);
  const bool ok_lo = valid(rho_lo);
  const bool ok_hi = valid(rho_hi);
  if (ok_lo && ok_hi) {
    res.state = StabilityState::bistable;
    res.gamma_roots = {g_lo, g_hi};
    res.rho_solutions = {std::move(rho_lo), std::move(rho_hi)};
  } else if (ok_lo || ok_hi) {
    res.state = StabilityState::stable;
    res.gamma_roots = {ok_lo ? g_lo : g_hi};
    res.rho_solutions = {ok_lo ? std::move(rho_lo) : std::move(rho_hi)};
  } else {
    res.state = StabilityState::unstable;
  }
  return res;
}

bool stability_region_contains(const Scenario& s, const std::vector<double>& lambda_tilde) {
  if (static_cast<int>(lambda_tilde.size()) != s.num_classes())
    fail(Err::config_invalid, "lambda_tilde length must match the class count");
  Scenario lim;
  lim.mode = Mode::limiting;
  lim.kappa = s.kappa;
  lim.tau = s.tau;
  lim.mpr = s.mpr;
  lim.classes.resize(s.num_classes());
  for (int v = 0; v < s.num_classes(); ++v) {
    lim.classes[v].fraction = s.beta(v);
    lim.classes[v].tx_prob = s.p_tilde(v);
    lim.classes[v].arrival_rate = lambda_tilde[v];
  }
  return solve_equilibrium(lim, {.grid_fallback = true}).state == StabilityState::stable;
}

std::vector<double> fixed_point_utilization(const Scenario& s, double damping, double tol,
                                            int max_iter) {
  require_valid(s);
  const int V = s.num_classes();
  std::vector<double> rho(V);
  for (int v = 0; v < V; ++v) {
    const double l = s.mode == Mode::finite ? s.lambda(v) : s.lambda_tilde(v);
    rho[v] = l > 0.0 ? std::clamp(l * s.tau, 1e-6, 0.5) : 0.0;
  }

  auto map = [&](const std::vector<double>& r) {
    std::vector<double> out(V);
    if (s.mode == Mode::limiting) {
      const double gamma = s.gamma_of(r);
      for (int v = 0; v < V; ++v) {
        const double lt = s.lambda_tilde(v);
        out[v] = lt == 0.0 ? 0.0 : std::clamp(lt / service_rate(s, v, gamma), 0.0, 1.0);
      }
      return out;
    }
    const double den = busy_denominator(s.tau, p_idle_finite(s, r));
    for (int v = 0; v < V; ++v) {
      const double l = s.lambda(v);
      if (l == 0.0) {
        out[v] = 0.0;
        continue;
      }
      const double rv = std::max(r[v], 1e-12);
      const double rate = p_succ_finite(s, r, v) / rv / den;  // success rate per unit rho
      out[v] = std::clamp(l / rate, 0.0, 1.0);
    }
    return out;
  };

  for (int it = 0; it < max_iter; ++it) {
    auto next = map(rho);
    double delta = 0.0;
    for (int v = 0; v < V; ++v) {
      next[v] = rho[v] + damping * (next[v] - rho[v]);
      delta = std::max(delta, std::abs(next[v] - rho[v]));
    }
    rho = std::move(next);
    if (delta < tol) {
      // Confirm the unclamped balance equations hold: a map that stalls at the
      // rho=1 clamp is saturation, not a fixed point.
      double resid = 0.0;
      if (s.mode == Mode::limiting) {
        const double gamma = s.gamma_of(rho);
        for (int v = 0; v < V; ++v)
          resid = std::max(
              resid, std::abs(s.lambda_tilde(v) - rho[v] * service_rate(s, v, gamma)));
      } else {
        const double den = busy_denominator(s.tau, p_idle_finite(s, rho));
        for (int v = 0; v < V; ++v)
          resid = std::max(resid,
                           std::abs(s.lambda(v) - p_succ_finite(s, rho, v) / den));
      }
      if (resid < 1e4 * tol) return rho;
      fail(Err::no_convergence, "iteration stalled at the saturation clamp (load unstable?)");
    }
  }
  fail(Err::no_convergence, "fixed-point iteration exceeded its cap");
}

}  // namespace csma_mpr
