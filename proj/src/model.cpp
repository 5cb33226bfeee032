#include "csma_mpr/model.hpp"

#include <cmath>
#include <sstream>

#include "csma_mpr/errors.hpp"

namespace csma_mpr {

const char* err_name(Err e) {
  switch (e) {
    case Err::config_invalid: return "CONFIG_INVALID";
    case Err::unstable_input: return "UNSTABLE_INPUT";
    case Err::zero_arrival: return "ZERO_ARRIVAL";
    case Err::non_unimodal: return "NON_UNIMODAL";
    case Err::no_convergence: return "NO_CONVERGENCE";
    case Err::infeasible: return "INFEASIBLE";
    case Err::search_exhausted: return "SEARCH_EXHAUSTED";
    case Err::cholesky_fail: return "CHOLESKY_FAIL";
    case Err::too_many_users: return "TOO_MANY_USERS";
    case Err::state_explosion: return "STATE_EXPLOSION";
    case Err::reducible: return "REDUCIBLE";
  }
  return "UNKNOWN";
}

double GeneralSymmetricMpr::mean_decoded(int L) const {
  if (L < 1 || L > max_multiplicity()) return 0.0;
  double s = 0.0;
  for (int k = 1; k <= L; ++k) s += k * rows[L - 1][k - 1];
  return s;
}

AllOrNothingMpr GeneralSymmetricMpr::effective_all_or_nothing() const {
  AllOrNothingMpr eff;
  eff.q.resize(rows.size());
  for (int L = 1; L <= max_multiplicity(); ++L) eff.q[L - 1] = mean_decoded(L) / L;
  return eff;
}

int mpr_max_multiplicity(const MprModel& m) {
  return std::visit([](const auto& v) { return v.max_multiplicity(); }, m);
}

AllOrNothingMpr mpr_effective(const MprModel& m) {
  if (const auto* a = std::get_if<AllOrNothingMpr>(&m)) return *a;
  return std::get<GeneralSymmetricMpr>(m).effective_all_or_nothing();
}

int Scenario::users(int v) const {
  return static_cast<int>(std::llround(classes[v].count.value()));
}

int Scenario::total_users() const {
  int n = 0;
  for (int v = 0; v < num_classes(); ++v) n += users(v);
  return n;
}

double Scenario::beta(int v) const {
  if (mode == Mode::limiting) return classes[v].fraction.value();
  return static_cast<double>(users(v)) / total_users();
}

double Scenario::lambda_tilde(int v) const {
  if (mode == Mode::limiting) return classes[v].arrival_rate;
  return total_users() * classes[v].arrival_rate;
}

double Scenario::p_tilde(int v) const {
  if (mode == Mode::limiting) return classes[v].tx_prob;
  return total_users() * classes[v].tx_prob;
}

double Scenario::lambda_total() const {
  double s = 0.0;
  for (int v = 0; v < num_classes(); ++v) s += beta(v) * lambda_tilde(v);
  return s;
}

double Scenario::gamma_of(const std::vector<double>& rho) const {
  double g = 0.0;
  for (int v = 0; v < num_classes(); ++v) g += beta(v) * p_tilde(v) * rho[v];
  return g;
}

namespace {

bool is_integer_valued(double x) { return std::isfinite(x) && x == std::floor(x); }

void check_mpr(const MprModel& m, std::vector<Violation>& out) {
  if (const auto* a = std::get_if<AllOrNothingMpr>(&m)) {
    if (a->q.empty()) out.push_back({"mpr.q", "must contain at least q_1"});
    for (size_t i = 0; i < a->q.size(); ++i) {
      if (!(a->q[i] >= 0.0 && a->q[i] <= 1.0))
        out.push_back({"mpr.q[" + std::to_string(i) + "]", "must lie in [0,1]"});
    }
    return;
  }
  const auto& g = std::get<GeneralSymmetricMpr>(m);
  if (g.rows.empty()) out.push_back({"mpr.q_matrix", "must contain at least row L=1"});
  for (size_t L = 1; L <= g.rows.size(); ++L) {
    const auto& row = g.rows[L - 1];
    if (row.size() != L) {
      out.push_back({"mpr.q_matrix", "row " + std::to_string(L) + " must have " +
                                         std::to_string(L) + " entries"});
      continue;
    }
    double sum = 0.0;
    for (size_t k = 0; k < row.size(); ++k) {
      if (!(row[k] >= 0.0 && row[k] <= 1.0))
        out.push_back({"mpr.q_matrix[" + std::to_string(L) + "," + std::to_string(k + 1) + "]",
                       "must lie in [0,1]"});
      sum += row[k];
    }
    if (sum > 1.0 + 1e-12)
      out.push_back({"mpr.q_matrix", "row " + std::to_string(L) + " sums to " +
                                         std::to_string(sum) + " > 1"});
  }
}

}  // namespace

std::vector<Violation> validate_scenario(const Scenario& s) {
  std::vector<Violation> out;
  if (s.classes.empty()) out.push_back({"classes", "must contain at least one class"});
  if (s.kappa < 1) out.push_back({"kappa", "must be >= 1"});
  if (s.tau < s.kappa) out.push_back({"tau", "must be >= kappa"});

  double frac_sum = 0.0;
  for (int v = 0; v < s.num_classes(); ++v) {
    const auto& c = s.classes[v];
    const std::string base = "classes[" + std::to_string(v) + "].";
    if (s.mode == Mode::finite) {
      if (!c.count) {
        out.push_back({base + "count", "required in finite mode"});
      } else if (!is_integer_valued(*c.count) || *c.count < 0) {
        out.push_back({base + "count", "must be a non-negative integer"});
      }
      if (!(c.arrival_rate >= 0.0 && c.arrival_rate <= 1.0))
        out.push_back({base + "arrival_rate", "must lie in [0,1] (per-slot probability)"});
      if (!(c.tx_prob >= 0.0 && c.tx_prob <= 1.0))
        out.push_back({base + "tx_prob", "must lie in [0,1] (per-boundary probability)"});
    } else {
      if (!c.fraction) {
        out.push_back({base + "fraction", "required in limiting mode"});
      } else if (!(*c.fraction >= 0.0 && *c.fraction <= 1.0)) {
        out.push_back({base + "fraction", "must lie in [0,1]"});
      } else {
        frac_sum += *c.fraction;
      }
      if (!(c.arrival_rate >= 0.0) || !std::isfinite(c.arrival_rate))
        out.push_back({base + "arrival_rate", "must be finite and >= 0"});
      if (!(c.tx_prob >= 0.0) || !std::isfinite(c.tx_prob))
        out.push_back({base + "tx_prob", "must be finite and >= 0"});
    }
  }
  if (s.mode == Mode::finite && !s.classes.empty()) {
    bool counts_ok = true;
    for (const auto& c : s.classes)
      if (!c.count || !is_integer_valued(*c.count) || *c.count < 0) counts_ok = false;
    if (counts_ok) {
      int n = 0;
      for (int v = 0; v < s.num_classes(); ++v) n += static_cast<int>(std::llround(*s.classes[v].count));
      if (n < 1) out.push_back({"classes", "finite mode needs at least one user in total"});
    }
  }
  if (s.mode == Mode::limiting && std::abs(frac_sum - 1.0) > 1e-9)
    out.push_back({"classes[].fraction", "fractions must sum to 1"});

  check_mpr(s.mpr, out);
  return out;
}

void require_valid(const Scenario& s) {
  auto v = validate_scenario(s);
  if (v.empty()) return;
  std::ostringstream msg;
  msg << "scenario failed validation:";
  for (const auto& viol : v) msg << " [" << viol.field << ": " << viol.message << "]";
  fail(Err::config_invalid, msg.str());
}

double chi(const AllOrNothingMpr& m, double x) {
  // sum q_L x^{L-1}/(L-1)! accumulated left-to-right; M is small in practice.
  double term = 1.0;  // x^{L-1}/(L-1)! for L=1
  double acc = 0.0;
  for (int L = 1; L <= m.max_multiplicity(); ++L) {
    acc += m.q[L - 1] * term;
    term *= x / L;
  }
  return acc;
}

bool q_chain_holds(const AllOrNothingMpr& m) {
  for (int L = 1; L < m.max_multiplicity(); ++L) {
    if (L * m.q[L - 1] > (L + 1) * m.q[L]) return false;
  }
  return true;
}

bool unimodality_condition_holds(const AllOrNothingMpr& m) {
  if (m.max_multiplicity() <= 2) return true;
  return q_chain_holds(m);
}

bool metastability_avoided(const Scenario& s, double gamma_bar) {
  double budget = 0.0;
  for (int v = 0; v < s.num_classes(); ++v) budget += s.users(v) * s.p(v);
  return budget < gamma_bar && q_chain_holds(mpr_effective(s.mpr));
}

}  // namespace csma_mpr
