#include "presets.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "csma_mpr/config_io.hpp"
#include "csma_mpr/delay.hpp"
#include "csma_mpr/errors.hpp"
#include "csma_mpr/meanfield.hpp"
#include "csma_mpr/model.hpp"
#include "csma_mpr/phy.hpp"
#include "csma_mpr/sim.hpp"
#include "csv_out.hpp"

namespace cli {
namespace {

using namespace csma_mpr;

struct Scheme {
  std::string name;
  std::vector<double> q;
};

Scenario two_class(double n1, double n2, double lam1, double lam2, double p1,
                   double p2, int kappa, std::vector<double> q) {
  Scenario s;
  s.kappa = kappa;
  s.tau = kappa;  // presets take the busy period equal to the packet length
  s.classes.push_back({n1, std::nullopt, lam1, p1});
  s.classes.push_back({n2, std::nullopt, lam2, p2});
  s.mpr = AllOrNothingMpr{std::move(q)};
  return s;
}

SimReport run_sim(const Scenario& s, long long horizon, long long warmup,
                  std::uint64_t seed, bool saturated) {
  SimConfig cfg;
  cfg.scenario = s;
  cfg.horizon = horizon;
  cfg.warmup = warmup;
  cfg.seed = seed;
  cfg.saturated = saturated;
  return run_simulation(cfg);
}

double aggregate_saturated_pred(const Scenario& s) {
  const std::vector<double> ones(s.num_classes(), 1.0);
  double sum = 0.0;
  for (int v = 0; v < s.num_classes(); ++v)
    sum += s.users(v) * throughput_finite(s, ones, v);
  return sum;
}

double aggregate_at(const Scenario& s, const std::vector<double>& rho) {
  double sum = 0.0;
  for (int v = 0; v < s.num_classes(); ++v)
    sum += s.users(v) * throughput_finite(s, rho, v);
  return sum;
}

double aggregate_sim(const SimReport& rep) {
  double sum = 0.0;
  for (const auto& c : rep.per_class) sum += c.throughput;
  return sum;
}

std::vector<std::uint64_t> seeds_or(const RunFlags& f,
                                    std::vector<std::uint64_t> dflt) {
  return f.seeds ? *f.seeds : dflt;
}

std::string quoted_q(const std::vector<double>& q) {
  std::string s = "(";
  for (std::size_t i = 0; i < q.size(); ++i)
    s += (i ? "," : "") + fmt_double(q[i]);
  return s + ")";
}

// ---- fig4: aggregate throughput vs p1, two classes, fixed p2 ----

void preset_fig4(const RunFlags& f) {
  const long long horizon = f.horizon.value_or(10000000);
  const long long warmup = f.warmup.value_or(horizon / 10);
  const auto seeds = seeds_or(f, {1});
  const std::vector<double> q{0.96, 0.89};
  const std::vector<double> lambdas{0.005, 0.01, 0.02};  // per user, both classes

  Manifest m;
  m.add("subcommand", "reproduce");
  m.add("preset", "fig4");
  m.add("scenario", "two classes, N1=N2=10, kappa=tau=10, p2=0.2, q=" + quoted_q(q));
  m.add("p1_grid", "0.02..0.30 step 0.02");
  m.add("arrival_rates", "per-user 0.005, 0.01, 0.02 (chosen to span light load "
                         "through overload) plus saturated");
  m.add("horizon", fmt_int(horizon));
  m.add("warmup", fmt_int(warmup));
  {
    std::string s;
    for (auto sd : seeds) s += (s.empty() ? "" : ",") + std::to_string(sd);
    m.add("seeds", s);
  }

  Table ana;
  ana.columns = {"p1", "arrivals", "state", "rho1", "rho2", "aggregate_throughput"};
  Table sim;
  sim.columns = {"p1", "arrivals", "seed", "aggregate_throughput",
                 "aggregate_throughput_se", "rho1_hat", "rho2_hat"};

  for (int i = 1; i <= 15; ++i) {
    const double p1 = (2.0 * i) / 100.0;
    // Saturated rows: utilization pinned at 1.
    {
      const Scenario s = two_class(10, 10, 0.0, 0.0, p1, 0.2, 10, q);
      ana.row({fmt_double(p1), "saturated", "saturated", "1", "1",
               fmt_double(aggregate_saturated_pred(s))});
      for (auto sd : seeds) {
        const SimReport rep = run_sim(s, horizon, warmup, sd, true);
        double se2 = 0.0;
        for (const auto& c : rep.per_class) se2 += c.throughput_se * c.throughput_se;
        sim.row({fmt_double(p1), "saturated", fmt_int((long long)sd),
                 fmt_double(aggregate_sim(rep)), fmt_double(std::sqrt(se2)),
                 fmt_double(rep.per_class[0].utilization_hat),
                 fmt_double(rep.per_class[1].utilization_hat)});
      }
    }
    for (double lam : lambdas) {
      const Scenario s = two_class(10, 10, lam, lam, p1, 0.2, 10, q);
      const EquilibriumResult eq = solve_equilibrium(s);
      std::string state = stability_name(eq.state);
      if (eq.state == StabilityState::stable) {
        const std::vector<double> rho = fixed_point_utilization(s);
        ana.row({fmt_double(p1), fmt_double(lam), state, fmt_double(rho[0]),
                 fmt_double(rho[1]), fmt_double(aggregate_at(s, rho))});
      } else {
        ana.row({fmt_double(p1), fmt_double(lam), state, "1", "1",
                 fmt_double(aggregate_saturated_pred(s))});
      }
      for (auto sd : seeds) {
        const SimReport rep = run_sim(s, horizon, warmup, sd, false);
        double se2 = 0.0;
        for (const auto& c : rep.per_class) se2 += c.throughput_se * c.throughput_se;
        sim.row({fmt_double(p1), fmt_double(lam), fmt_int((long long)sd),
                 fmt_double(aggregate_sim(rep)), fmt_double(std::sqrt(se2)),
                 fmt_double(rep.per_class[0].utilization_hat),
                 fmt_double(rep.per_class[1].utilization_hat)});
      }
    }
  }
  write_outputs(f.out, "fig4_analysis", m, ana, f.format);
  write_outputs(f.out, "fig4_simulation", m, sim, f.format);
}

// ---- fig5: maximum aggregate throughput vs N at K=2 ----

void preset_fig5(const RunFlags& f) {
  const long long horizon = f.horizon.value_or(2000000);
  const long long warmup = f.warmup.value_or(horizon / 10);
  const auto seeds = seeds_or(f, {1});
  const std::vector<Scheme> schemes{
      {"mpr", {0.98, 0.95, 0.91}},  // K=2 reception (Table 1, 15 dB column)
      {"conventional", {0.98}},
  };
  const std::vector<int> n_grid{10, 20, 30, 40, 50, 60};

  Manifest m;
  m.add("subcommand", "reproduce");
  m.add("preset", "fig5");
  m.add("scenario", "two classes, N1=N2=N/2, kappa=tau=10, p1=5/(6N), p2=7/(6N)");
  m.add("q_mpr", quoted_q(schemes[0].q) + " (implementer-chosen from the K=2 "
                 "success-probability column); conventional " +
                 quoted_q(schemes[1].q));
  m.add("N_grid", "10,20,30,40,50,60");
  m.add("horizon", fmt_int(horizon));
  m.add("warmup", fmt_int(warmup));

  Table ana;
  ana.columns = {"N", "scheme", "p1", "p2", "max_stable_aggregate",
                 "gamma_star", "saturated_aggregate"};
  Table sim;
  sim.columns = {"N", "scheme", "seed", "saturated_aggregate",
                 "saturated_aggregate_se"};

  for (int n : n_grid) {
    const double p1 = 5.0 / (6.0 * n);
    const double p2 = 7.0 / (6.0 * n);
    for (const auto& sch : schemes) {
      const Scenario s = two_class(n / 2, n / 2, 0.0, 0.0, p1, p2, 10, sch.q);
      const EquilibriumResult eq = solve_equilibrium(s);
      ana.row({fmt_int(n), sch.name, fmt_double(p1), fmt_double(p2),
               fmt_double(eq.f_max), fmt_double(eq.gamma_star),
               fmt_double(aggregate_saturated_pred(s))});
      for (auto sd : seeds) {
        const SimReport rep = run_sim(s, horizon, warmup, sd, true);
        double se2 = 0.0;
        for (const auto& c : rep.per_class) se2 += c.throughput_se * c.throughput_se;
        sim.row({fmt_int(n), sch.name, fmt_int((long long)sd),
                 fmt_double(aggregate_sim(rep)), fmt_double(std::sqrt(se2))});
      }
    }
  }
  write_outputs(f.out, "fig5_analysis", m, ana, f.format);
  write_outputs(f.out, "fig5_simulation", m, sim, f.format);
}

// ---- fig6: saturated throughput vs p1 at 6 dB, four reception schemes ----

void preset_fig6(const RunFlags& f) {
  const long long horizon = f.horizon.value_or(1000000);
  const long long warmup = f.warmup.value_or(horizon / 10);
  const auto seeds = seeds_or(f, {1});
  const std::vector<Scheme> schemes{
      {"conventional", {0.78}},
      {"sic", {0.78, 0.46}},
      {"scf", {0.78, 0.57}},
      {"jd", {0.78, 0.60}},
  };

  Manifest m;
  m.add("subcommand", "reproduce");
  m.add("preset", "fig6");
  m.add("scenario", "two classes, N1=3N/5, p2=0.8*p1, kappa=tau=10, saturated; "
                    "6 dB / rate 1 success probabilities");
  m.add("N_grid", "5,10");
  m.add("p1_grid", "0.05..0.95 step 0.05");
  m.add("horizon", fmt_int(horizon));
  m.add("warmup", fmt_int(warmup));

  Table ana;
  ana.columns = {"N", "scheme", "p1", "p2", "aggregate_throughput"};
  Table sim;
  sim.columns = {"N", "scheme", "p1", "seed", "aggregate_throughput",
                 "aggregate_throughput_se"};

  for (int n : {5, 10}) {
    const int n1 = 3 * n / 5;
    const int n2 = n - n1;
    for (const auto& sch : schemes) {
      for (int i = 1; i <= 19; ++i) {
        const double p1 = (5.0 * i) / 100.0;
        const double p2 = 0.8 * p1;
        const Scenario s = two_class(n1, n2, 0.0, 0.0, p1, p2, 10, sch.q);
        ana.row({fmt_int(n), sch.name, fmt_double(p1), fmt_double(p2),
                 fmt_double(aggregate_saturated_pred(s))});
        for (auto sd : seeds) {
          const SimReport rep = run_sim(s, horizon, warmup, sd, true);
          double se2 = 0.0;
          for (const auto& c : rep.per_class)
            se2 += c.throughput_se * c.throughput_se;
          sim.row({fmt_int(n), sch.name, fmt_double(p1), fmt_int((long long)sd),
                   fmt_double(aggregate_sim(rep)), fmt_double(std::sqrt(se2))});
        }
      }
    }
  }
  write_outputs(f.out, "fig6_analysis", m, ana, f.format);
  write_outputs(f.out, "fig6_simulation", m, sim, f.format);
}

// ---- fig7: aggregate throughput vs p1 with fixed arrivals at 15 dB ----

void preset_fig7(const RunFlags& f) {
  const long long horizon = f.horizon.value_or(5000000);
  const long long warmup = f.warmup.value_or(horizon / 10);
  const auto seeds = seeds_or(f, {1});
  const int n1 = 12, n2 = 8, n = n1 + n2;
  const double lam1 = 1.0 / 16.0 / n;  // reference rates are aggregate (N * lambda)
  const double lam2 = 1.0 / 64.0 / n;
  const double p2 = 0.25;
  const std::vector<Scheme> schemes{
      {"conventional", {0.91}},
      {"sic", {0.91, 0.31}},
      {"scf", {0.91, 0.66}},
      {"jd", {0.91, 0.80}},
  };

  Manifest m;
  m.add("subcommand", "reproduce");
  m.add("preset", "fig7");
  m.add("scenario", "N1=12, N2=8, scaled arrivals 1/16 and 1/64 (per-user "
                    "lambda = scaled/N), p2=1/4, kappa=tau=10; 15 dB / rate 2 "
                    "success probabilities");
  m.add("p1_grid", "0.02..0.60 step 0.02");
  m.add("horizon", fmt_int(horizon));
  m.add("warmup", fmt_int(warmup));

  Table ana;
  ana.columns = {"scheme", "p1", "state", "root", "rho1", "rho2",
                 "aggregate_throughput"};
  Table sim;
  sim.columns = {"scheme", "p1", "seed", "aggregate_throughput",
                 "aggregate_throughput_se", "rho1_hat", "rho2_hat"};

  for (const auto& sch : schemes) {
    for (int i = 1; i <= 30; ++i) {
      const double p1 = (2.0 * i) / 100.0;
      const Scenario s = two_class(n1, n2, lam1, lam2, p1, p2, 10, sch.q);
      const EquilibriumResult eq = solve_equilibrium(s);
      const std::string state = stability_name(eq.state);
      if (eq.state == StabilityState::unstable || eq.rho_solutions.empty()) {
        ana.row({sch.name, fmt_double(p1), state, "0", "1", "1",
                 fmt_double(aggregate_saturated_pred(s))});
      } else {
        for (std::size_t r = 0; r < eq.rho_solutions.size(); ++r) {
          const auto& rho = eq.rho_solutions[r];
          ana.row({sch.name, fmt_double(p1), state, fmt_int((long long)r),
                   fmt_double(rho[0]), fmt_double(rho[1]),
                   fmt_double(aggregate_at(s, rho))});
        }
      }
      for (auto sd : seeds) {
        const SimReport rep = run_sim(s, horizon, warmup, sd, false);
        double se2 = 0.0;
        for (const auto& c : rep.per_class) se2 += c.throughput_se * c.throughput_se;
        sim.row({sch.name, fmt_double(p1), fmt_int((long long)sd),
                 fmt_double(aggregate_sim(rep)), fmt_double(std::sqrt(se2)),
                 fmt_double(rep.per_class[0].utilization_hat),
                 fmt_double(rep.per_class[1].utilization_hat)});
      }
    }
  }
  write_outputs(f.out, "fig7_analysis", m, ana, f.format);
  write_outputs(f.out, "fig7_simulation", m, sim, f.format);
}

// ---- fig8/9/10: delay vs arrival rate, N1=20 N2=10 ----

void preset_delay_figure(const RunFlags& f, const std::string& name,
                         const std::string& snr_note,
                         const std::vector<Scheme>& schemes) {
  const long long horizon = f.horizon.value_or(20000000);
  const long long warmup = f.warmup.value_or(horizon / 10);
  const auto seeds = seeds_or(f, {1});
  const int n1 = 20, n2 = 10, n = n1 + n2;
  const double p1 = 1.0 / 40.0, p2 = 1.0 / 20.0;

  Manifest m;
  m.add("subcommand", "reproduce");
  m.add("preset", name);
  m.add("scenario", "N1=20, N2=10, p1=1/40, p2=1/20, kappa=tau=10; " + snr_note);
  m.add("arrivals", "equal per-user rate lambda = frac * lambda_sup, "
                    "lambda_sup = f(gamma_0)/N per scheme");
  m.add("frac_grid", "0.10..0.75 step 0.05");
  m.add("horizon", fmt_int(horizon));
  m.add("warmup", fmt_int(warmup));

  Table ana;
  ana.columns = {"scheme", "frac", "lambda", "class", "rho", "p_idle",
                 "service_delay", "total_delay"};
  Table sim;
  sim.columns = {"scheme", "frac",
                 "lambda", "seed",
                 "class", "service_delay_renewal",
                 "service_delay_renewal_se", "total_delay_renewal",
                 "total_delay_renewal_se", "service_delay_slots",
                 "total_delay_slots", "utilization_hat"};

  for (const auto& sch : schemes) {
    const Scenario probe = two_class(n1, n2, 0.0, 0.0, p1, p2, 10, sch.q);
    const double lambda_sup = solve_equilibrium(probe).lambda_0 / n;
    for (int i = 2; i <= 15; ++i) {
      const double frac = (5.0 * i) / 100.0;
      const double lam = frac * lambda_sup;
      const Scenario s = two_class(n1, n2, lam, lam, p1, p2, 10, sch.q);
      const std::vector<double> rho = fixed_point_utilization(s);
      for (int v = 0; v < 2; ++v) {
        const DelayReport d = delay_report(s, rho, v);
        ana.row({sch.name, fmt_double(frac), fmt_double(lam), fmt_int(v),
                 fmt_double(rho[v]), fmt_double(d.p_idle),
                 fmt_double(d.service_delay), fmt_double(d.total_delay)});
      }
      for (auto sd : seeds) {
        const SimReport rep = run_sim(s, horizon, warmup, sd, false);
        for (int v = 0; v < 2; ++v) {
          const auto& c = rep.per_class[v];
          sim.row({sch.name, fmt_double(frac), fmt_double(lam),
                   fmt_int((long long)sd), fmt_int(v),
                   fmt_double(c.mean_service_delay_renewal),
                   fmt_double(c.service_delay_renewal_se),
                   fmt_double(c.mean_total_delay_renewal),
                   fmt_double(c.total_delay_renewal_se),
                   fmt_double(c.mean_service_delay),
                   fmt_double(c.mean_total_delay),
                   fmt_double(c.utilization_hat)});
        }
      }
    }
  }
  write_outputs(f.out, name + "_analysis", m, ana, f.format);
  write_outputs(f.out, name + "_simulation", m, sim, f.format);
}

// ---- table1: success-probability grid ----

void preset_table1(const RunFlags& f) {
  const long long samples = f.samples.value_or(100000);
  const std::uint64_t seed = f.seeds ? f.seeds->at(0) : 1;

  Manifest m;
  m.add("subcommand", "reproduce");
  m.add("preset", "table1");
  m.add("configs", "(6 dB, R=1, K=1, L<=2), (15 dB, R=2, K=1, L<=2), "
                   "(15 dB, R=3, K=2, L<=3)");
  m.add("decoders", "sic, cf, scf, jd");
  m.add("samples", fmt_int(samples));
  m.add("seed", fmt_int((long long)seed));

  Table t;
  t.columns = {"decoder", "snr_db", "K", "R", "L",
               "q_hat",   "ci_half_width", "samples", "seed"};
  struct Config {
    double snr_db, R;
    int K, l_max;
  } configs[] = {{6.0, 1.0, 1, 2}, {15.0, 2.0, 1, 2}, {15.0, 3.0, 2, 3}};
  for (const auto& c : configs) {
    for (int L = 1; L <= c.l_max; ++L) {
      for (Decoder d : {Decoder::sic, Decoder::cf, Decoder::scf, Decoder::jd}) {
        PhyConfig cfg;
        cfg.snr_db = c.snr_db;
        cfg.K = c.K;
        cfg.message_rate = c.R;
        cfg.decoder = d;
        cfg.samples = samples;
        cfg.seed = seed;
        const QEstimate est = estimate_q(cfg, L);
        t.row({decoder_name(d), fmt_double(c.snr_db), fmt_int(c.K),
               fmt_double(c.R), fmt_int(L), fmt_double(est.q_hat),
               fmt_double(est.ci_half_width), fmt_int(est.samples),
               fmt_int((long long)seed)});
      }
    }
  }
  write_outputs(f.out, "table1_qprob", m, t, f.format);
}

}  // namespace

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{
      "fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10", "table1"};
  return names;
}

void run_reproduce(const std::string& preset, const RunFlags& flags) {
  const std::vector<Scheme> snr6{{"conventional", {0.78}},
                                 {"sic", {0.78, 0.46}},
                                 {"scf", {0.78, 0.57}},
                                 {"jd", {0.78, 0.60}}};
  const std::vector<Scheme> snr15{{"conventional", {0.91}},
                                  {"sic", {0.91, 0.31}},
                                  {"scf", {0.91, 0.66}},
                                  {"jd", {0.91, 0.80}}};
  if (preset == "fig4") return preset_fig4(flags);
  if (preset == "fig5") return preset_fig5(flags);
  if (preset == "fig6") return preset_fig6(flags);
  if (preset == "fig7") return preset_fig7(flags);
  if (preset == "fig8")
    return preset_delay_figure(flags, "fig8",
                               "6 dB / rate 1 success probabilities (service-delay view)",
                               snr6);
  if (preset == "fig9")
    return preset_delay_figure(flags, "fig9",
                               "6 dB / rate 1 success probabilities (total-delay view)",
                               snr6);
  if (preset == "fig10")
    return preset_delay_figure(flags, "fig10",
                               "15 dB / rate 2 success probabilities (service-delay view)",
                               snr15);
  if (preset == "table1") return preset_table1(flags);
  fail(Err::config_invalid, "unknown preset '" + preset + "'");
}

}  // namespace cli
