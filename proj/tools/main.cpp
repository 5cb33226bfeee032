#include <cstdio>
#include <cstdint>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "csma_mpr/config_io.hpp"
#include "csma_mpr/delay.hpp"
#include "csma_mpr/errors.hpp"
#include "csma_mpr/meanfield.hpp"
#include "csma_mpr/model.hpp"
#include "csma_mpr/phy.hpp"
#include "csma_mpr/sim.hpp"
#include "csv_out.hpp"
#include "presets.hpp"

namespace {

using namespace csma_mpr;
using cli::fmt_double;
using cli::fmt_int;

int exit_code_for(Err e) {
  switch (e) {
    case Err::config_invalid:
      return 2;
    case Err::infeasible:
      return 4;
    default:
      return 3;  // numerical / model errors
  }
}

std::string join_seeds(const std::vector<std::uint64_t>& seeds) {
  std::string s;
  for (auto x : seeds) s += (s.empty() ? "" : ",") + std::to_string(x);
  return s;
}

// ---- analyze ----

int cmd_analyze(const std::string& config_path, const cli::RunFlags& flags) {
  const Scenario s = load_scenario(config_path);
  const EquilibriumResult eq = solve_equilibrium(s);

  cli::Manifest m;
  m.add("subcommand", "analyze");
  m.add("config_path", config_path);
  m.add("config", scenario_to_json(s));
  m.add("rho_source", s.mode == Mode::finite
                          ? "finite-formula damped fixed point (scaled root fallback)"
                          : "limiting-system root");

  cli::Table t;
  t.columns = {"state",         "root",     "gamma",   "class",
               "lambda",        "rho",      "throughput", "service_delay",
               "total_delay",   "lambda_total", "lambda_0", "gamma_0",
               "gamma_star"};
  const std::string state = stability_name(eq.state);
  const std::string lt = fmt_double(eq.lambda_total);
  const std::string l0 = fmt_double(eq.lambda_0);
  const std::string g0 = fmt_double(eq.gamma_0);
  const std::string gs = fmt_double(eq.gamma_star);

  if (eq.state == StabilityState::unstable || eq.rho_solutions.empty()) {
    t.row({state, "", "", "", "", "", "", "", "", lt, l0, g0, gs});
  } else {
    for (std::size_t r = 0; r < eq.rho_solutions.size(); ++r) {
      std::vector<double> rho = eq.rho_solutions[r];
      // The unique stable equilibrium of a finite scenario is reported at
      // finite-N accuracy when the iteration converges.
      if (eq.state == StabilityState::stable && s.mode == Mode::finite) {
        try {
          rho = fixed_point_utilization(s);
        } catch (const Error&) {
        }
      }
      for (int v = 0; v < s.num_classes(); ++v) {
        std::string svc, tot;
        if (eq.state == StabilityState::stable && s.classes[v].arrival_rate > 0) {
          const DelayReport d = delay_report(s, rho, v);
          svc = fmt_double(d.service_delay);
          tot = fmt_double(d.total_delay);
        }
        const double thr = s.mode == Mode::finite
                               ? s.users(v) * throughput_finite(s, rho, v)
                               : s.beta(v) * throughput_general_mpr(s, rho, v);
        t.row({state, fmt_int((long long)r), fmt_double(eq.gamma_roots[r]),
               fmt_int(v), fmt_double(s.classes[v].arrival_rate),
               fmt_double(rho[v]), fmt_double(thr), svc, tot, lt, l0, g0, gs});
      }
    }
  }
  cli::write_outputs(flags.out, "analyze", m, t, flags.format);
  return 0;
}

// ---- simulate ----

int cmd_simulate(const std::string& config_path, long long horizon,
                 long long warmup, const std::vector<std::uint64_t>& seeds,
                 bool saturated, const cli::RunFlags& flags) {
  const Scenario s = load_scenario(config_path);

  cli::Manifest m;
  m.add("subcommand", "simulate");
  m.add("config_path", config_path);
  m.add("config", scenario_to_json(s));
  m.add("horizon", fmt_int(horizon));
  m.add("warmup", fmt_int(warmup));
  m.add("seeds", join_seeds(seeds));
  m.add("saturated", saturated ? "true" : "false");

  cli::Table t;
  t.columns = {"seed",
               "class",
               "packets_delivered",
               "throughput",
               "throughput_se",
               "utilization_hat",
               "utilization_se",
               "service_delay_slots",
               "service_delay_slots_se",
               "total_delay_slots",
               "total_delay_slots_se",
               "service_delay_renewal",
               "service_delay_renewal_se",
               "total_delay_renewal",
               "total_delay_renewal_se",
               "mean_backlog"};

  const int V = s.num_classes();
  std::vector<std::vector<double>> agg(V);  // per-class per-seed throughput
  for (auto seed : seeds) {
    SimConfig cfg;
    cfg.scenario = s;
    cfg.horizon = horizon;
    cfg.warmup = warmup;
    cfg.seed = seed;
    cfg.saturated = saturated;
    const SimReport rep = run_simulation(cfg);
    for (const auto& w : rep.warnings)
      std::fprintf(stderr, "warning (seed %llu): %s\n",
                   (unsigned long long)seed, w.c_str());
    for (int v = 0; v < V; ++v) {
      const auto& c = rep.per_class[v];
      agg[v].push_back(c.throughput);
      t.row({fmt_int((long long)seed), fmt_int(v), fmt_int(c.packets_delivered),
             fmt_double(c.throughput), fmt_double(c.throughput_se),
             fmt_double(c.utilization_hat), fmt_double(c.utilization_se),
             fmt_double(c.mean_service_delay), fmt_double(c.service_delay_se),
             fmt_double(c.mean_total_delay), fmt_double(c.total_delay_se),
             fmt_double(c.mean_service_delay_renewal),
             fmt_double(c.service_delay_renewal_se),
             fmt_double(c.mean_total_delay_renewal),
             fmt_double(c.total_delay_renewal_se), fmt_double(c.mean_backlog)});
    }
  }
  if (seeds.size() > 1) {
    for (int v = 0; v < V; ++v) {
      double mean = 0.0;
      for (double x : agg[v]) mean += x;
      mean /= agg[v].size();
      double var = 0.0;
      for (double x : agg[v]) var += (x - mean) * (x - mean);
      const double se = std::sqrt(var / (agg[v].size() - 1.0) / agg[v].size());
      t.row({"mean", fmt_int(v), "", fmt_double(mean), fmt_double(se), "", "",
             "", "", "", "", "", "", "", "", ""});
    }
  }
  cli::write_outputs(flags.out, "simulate", m, t, flags.format);
  return 0;
}

// ---- qprob ----

int cmd_qprob(const std::string& decoder, double snr_db, double rate, int k,
              int l_min, int l_max, long long samples, std::uint64_t seed,
              int a_radius, bool lattice_loss, const cli::RunFlags& flags) {
  if (l_min < 1 || l_max < l_min)
    fail(Err::config_invalid, "need 1 <= l-min <= l-max");
  std::vector<Decoder> decoders;
  if (decoder == "all")
    decoders = {Decoder::sic, Decoder::cf, Decoder::scf, Decoder::jd};
  else
    decoders = {decoder_from_name(decoder)};

  cli::Manifest m;
  m.add("subcommand", "qprob");
  m.add("decoder", decoder);
  m.add("snr_db", fmt_double(snr_db));
  m.add("rate", fmt_double(rate));
  m.add("K", fmt_int(k));
  m.add("L_range", fmt_int(l_min) + ".." + fmt_int(l_max));
  m.add("samples", fmt_int(samples));
  m.add("seed", fmt_int((long long)seed));
  m.add("a_radius", fmt_int(a_radius));
  m.add("lattice_loss", lattice_loss ? "hypercube shaping, ideal margin" : "none");
  if (samples < 30)
    m.add("warning", "sample count too small for a normal-approximation CI");

  cli::Table t;
  t.columns = {"decoder", "snr_db", "K",       "R",
               "L",       "q_hat",  "ci_half_width", "samples",
               "failed_samples", "seed"};
  for (int L = l_min; L <= l_max; ++L) {
    for (Decoder d : decoders) {
      PhyConfig cfg;
      cfg.snr_db = snr_db;
      cfg.K = k;
      cfg.message_rate = rate;
      cfg.decoder = d;
      cfg.samples = samples;
      cfg.seed = seed;
      cfg.a_radius = a_radius;
      if (lattice_loss) cfg.lattice_loss = LatticeLoss{};
      const QEstimate est = estimate_q(cfg, L);
      t.row({decoder_name(d), fmt_double(snr_db), fmt_int(k), fmt_double(rate),
             fmt_int(L), fmt_double(est.q_hat), fmt_double(est.ci_half_width),
             fmt_int(est.samples), fmt_int(est.failed_samples),
             fmt_int((long long)seed)});
    }
  }
  cli::write_outputs(flags.out, "qprob", m, t, flags.format);
  return 0;
}

// ---- design ----

int cmd_design(const std::string& config_path, const std::vector<double>& targets,
               const cli::RunFlags& flags) {
  const Scenario s = load_scenario(config_path);
  if ((int)targets.size() != s.num_classes())
    fail(Err::config_invalid,
         "need one delay target per class (" + std::to_string(s.num_classes()) +
             " classes, " + std::to_string(targets.size()) + " targets)");
  DesignResult r;
  try {
    r = design_tx_probs(s, targets);
  } catch (const Error& e) {
    if (e.code() == Err::infeasible) {
      const EquilibriumResult eq = solve_equilibrium(s);
      std::fprintf(stderr,
                   "diagnostics: state=%s lambda_total=%.17g lambda_0=%.17g "
                   "gamma_0=%.17g gamma_star=%.17g\n",
                   stability_name(eq.state), eq.lambda_total,
                   eq.lambda_0, eq.gamma_0, eq.gamma_star);
    }
    throw;
  }

  cli::Manifest m;
  m.add("subcommand", "design");
  m.add("config_path", config_path);
  m.add("config", scenario_to_json(s));
  {
    std::string ts;
    for (double x : targets) ts += (ts.empty() ? "" : ",") + fmt_double(x);
    m.add("targets", ts);
  }
  m.add("p_idle_at_x", fmt_double(r.p_idle_at_x));

  cli::Table t;
  t.columns = {"class", "lambda", "target_total_delay", "p_min", "x_star"};
  for (int v = 0; v < s.num_classes(); ++v)
    t.row({fmt_int(v), fmt_double(s.classes[v].arrival_rate),
           fmt_double(targets[v]), fmt_double(r.p_min[v]),
           fmt_double(r.x_star[v])});
  cli::write_outputs(flags.out, "design", m, t, flags.format);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"persistent-CSMA multi-packet-reception analysis toolkit"};
  app.require_subcommand(1);

  cli::RunFlags flags;
  std::string config_path;
  long long horizon = 0, warmup = -1, samples = 100000;
  std::vector<std::uint64_t> seeds{1};
  bool saturated = false, lattice_loss = false;
  std::string decoder = "all", preset, format = "csv", out_dir = ".";
  double snr_db = 0.0, rate = 1.0;
  int k = 1, l_min = 1, l_max = 0, a_radius = 2;
  std::vector<double> targets;

  auto add_output_flags = [&](CLI::App* c) {
    c->add_option("--out", out_dir, "output directory")->capture_default_str();
    c->add_option("--format", format, "csv | json (json adds a mirror file)")
        ->check(CLI::IsMember({"csv", "json"}))
        ->capture_default_str();
  };

  auto* analyze = app.add_subcommand(
      "analyze", "equilibrium classification, utilizations, and delay formulas");
  analyze->add_option("--config", config_path, "scenario JSON")->required();
  add_output_flags(analyze);

  auto* simulate =
      app.add_subcommand("simulate", "slot-level protocol simulation");
  simulate->add_option("--config", config_path, "scenario JSON (finite mode)")
      ->required();
  simulate->add_option("--horizon", horizon, "total slots")->required();
  simulate->add_option("--warmup", warmup,
                       "slots discarded before measuring (default horizon/10)");
  simulate->add_option("--seeds", seeds, "comma-separated seed list")
      ->delimiter(',')
      ->capture_default_str();
  simulate->add_flag("--saturated", saturated,
                     "all queues permanently backlogged (no arrivals)");
  add_output_flags(simulate);

  auto* qprob = app.add_subcommand(
      "qprob", "Monte Carlo success probabilities of the reception schemes");
  qprob->add_option("--decoder", decoder, "sic | cf | scf | jd | all")
      ->capture_default_str();
  qprob->add_option("--snr-db", snr_db, "signal-to-noise ratio in dB")
      ->capture_default_str();
  qprob->add_option("--rate", rate, "message rate R in bits per channel use")
      ->capture_default_str();
  qprob->add_option("--k", k, "receive antennas")->capture_default_str();
  qprob->add_option("--l-min", l_min, "smallest multiplicity")
      ->capture_default_str();
  qprob->add_option("--l-max", l_max, "largest multiplicity (default K+1)");
  qprob->add_option("--samples", samples, "Monte Carlo samples per cell")
      ->capture_default_str();
  qprob->add_option("--seed", seeds, "base seed")->delimiter(',');
  qprob->add_option("--a-radius", a_radius,
                    "integer-search radius for cf/scf")
      ->capture_default_str();
  qprob->add_flag("--lattice-loss", lattice_loss,
                  "apply practical lattice-code adjustments (cf/scf/sic)");
  bool table1 = false;
  qprob->add_flag("--table1", table1,
                  "run the three reference configurations for all decoders");
  add_output_flags(qprob);

  auto* design = app.add_subcommand(
      "design", "minimum transmission probabilities for delay targets");
  design->add_option("--config", config_path, "scenario JSON")->required();
  design->add_option("--targets", targets,
                     "per-class mean total-delay targets (slots)")
      ->delimiter(',')
      ->required();
  add_output_flags(design);

  auto* reproduce =
      app.add_subcommand("reproduce", "figure/table reproduction pipelines");
  reproduce->add_option("preset,--preset", preset, "fig4..fig10 or table1");
  reproduce->add_option("--horizon", horizon, "override simulation horizon");
  reproduce->add_option("--warmup", warmup, "override warmup");
  reproduce->add_option("--samples", samples, "override Monte Carlo samples");
  bool seeds_given = false;
  reproduce->add_option("--seeds", seeds, "override seed list")
      ->delimiter(',')
      ->each([&](const std::string&) { seeds_given = true; });
  add_output_flags(reproduce);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // bad flags are configuration errors
  }

  flags.out = out_dir;
  flags.format = format;

  try {
    if (analyze->parsed()) return cmd_analyze(config_path, flags);
    if (simulate->parsed())
      return cmd_simulate(config_path, horizon, warmup, seeds, saturated, flags);
    if (qprob->parsed()) {
      if (table1) {
        flags.samples = samples;
        flags.seeds = seeds;
        cli::run_reproduce("table1", flags);
        return 0;
      }
      if (l_max == 0) l_max = k + 1;
      return cmd_qprob(decoder, snr_db, rate, k, l_min, l_max, samples,
                       seeds.at(0), a_radius, lattice_loss, flags);
    }
    if (design->parsed()) return cmd_design(config_path, targets, flags);
    if (reproduce->parsed()) {
      if (preset.empty())
        fail(Err::config_invalid, "reproduce needs a preset name");
      if (reproduce->count("--horizon")) flags.horizon = horizon;
      if (reproduce->count("--warmup")) flags.warmup = warmup;
      if (reproduce->count("--samples")) flags.samples = samples;
      if (seeds_given) flags.seeds = seeds;
      cli::run_reproduce(preset, flags);
      return 0;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
