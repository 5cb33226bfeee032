#include "csma_mpr/config_io.hpp"

#include <fstream>
#include <sstream>

#include "csma_mpr/errors.hpp"
#include "json.hpp"

namespace csma_mpr {
namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& msg) { fail(Err::config_invalid, msg); }

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed,
                    const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) known = true;
    if (!known) bad("unknown key '" + it.key() + "' in " + where);
  }
}

double num_field(const json& obj, const char* key, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) bad(where + " is missing '" + key + "'");
  if (!it->is_number()) bad(where + "." + key + " must be a number");
  return it->get<double>();
}

MprModel parse_mpr(const json& m) {
  if (!m.is_object()) bad("mpr must be an object");
  const auto kind_it = m.find("kind");
  if (kind_it == m.end() || !kind_it->is_string()) bad("mpr.kind must be a string");
  const std::string kind = kind_it->get<std::string>();
  if (kind == "all_or_nothing") {
    reject_unknown(m, {"kind", "q"}, "mpr");
    const auto q_it = m.find("q");
    if (q_it == m.end() || !q_it->is_array() || q_it->empty())
      bad("all_or_nothing mpr needs a non-empty array 'q'");
    AllOrNothingMpr mpr;
    for (const auto& x : *q_it) {
      if (!x.is_number()) bad("mpr.q entries must be numbers");
      mpr.q.push_back(x.get<double>());
    }
    return mpr;
  }
  if (kind == "general") {
    reject_unknown(m, {"kind", "q_matrix"}, "mpr");
    const auto t_it = m.find("q_matrix");
    if (t_it == m.end() || !t_it->is_array() || t_it->empty())
      bad("general mpr needs a non-empty array 'q_matrix'");
    std::vector<double> flat;
    for (const auto& x : *t_it) {
      if (!x.is_number()) bad("mpr.q_matrix entries must be numbers");
      flat.push_back(x.get<double>());
    }
    // Row-major lower triangle: rows of length 1, 2, ..., M.
    GeneralSymmetricMpr mpr;
    std::size_t pos = 0;
    for (std::size_t len = 1; pos < flat.size(); ++len) {
      if (flat.size() - pos < len)
        bad("mpr.q_matrix length " + std::to_string(flat.size()) +
            " is not a lower triangle (expected 1+2+...+M entries)");
      mpr.rows.emplace_back(flat.begin() + pos, flat.begin() + pos + len);
      pos += len;
    }
    return mpr;
  }
  bad("mpr.kind must be 'all_or_nothing' or 'general', got '" + kind + "'");
}

}  // namespace

Scenario scenario_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    bad(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) bad("config root must be a JSON object");
  reject_unknown(j, {"mode", "kappa", "tau", "classes", "mpr"}, "config");

  Scenario s;
  if (const auto it = j.find("mode"); it != j.end()) {
    if (!it->is_string()) bad("mode must be a string");
    const std::string mode = it->get<std::string>();
    if (mode == "finite")
      s.mode = Mode::finite;
    else if (mode == "limiting")
      s.mode = Mode::limiting;
    else
      bad("mode must be 'finite' or 'limiting', got '" + mode + "'");
  }

  const auto kappa_it = j.find("kappa");
  if (kappa_it == j.end()) bad("config is missing 'kappa'");
  if (!kappa_it->is_number_integer()) bad("kappa must be an integer");
  s.kappa = kappa_it->get<int>();
  if (const auto it = j.find("tau"); it != j.end()) {
    if (!it->is_number_integer()) bad("tau must be an integer");
    s.tau = it->get<int>();
  } else {
    s.tau = s.kappa;
  }

  const auto cls_it = j.find("classes");
  if (cls_it == j.end() || !cls_it->is_array() || cls_it->empty())
    bad("config needs a non-empty 'classes' array");
  int idx = 0;
  for (const auto& c : *cls_it) {
    const std::string where = "classes[" + std::to_string(idx) + "]";
    if (!c.is_object()) bad(where + " must be an object");
    reject_unknown(c, {"count", "fraction", "arrival_rate", "tx_prob"}, where);
    ClassSpec spec;
    const bool has_count = c.contains("count");
    const bool has_fraction = c.contains("fraction");
    if (has_count == has_fraction)
      bad(where + " needs exactly one of 'count' or 'fraction'");
    if (has_count) spec.count = num_field(c, "count", where);
    if (has_fraction) spec.fraction = num_field(c, "fraction", where);
    spec.arrival_rate = num_field(c, "arrival_rate", where);
    spec.tx_prob = num_field(c, "tx_prob", where);
    s.classes.push_back(spec);
    ++idx;
  }

  const auto mpr_it = j.find("mpr");
  if (mpr_it == j.end()) bad("config is missing 'mpr'");
  s.mpr = parse_mpr(*mpr_it);

  require_valid(s);
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) bad("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return scenario_from_json(buf.str());
}

std::string scenario_to_json(const Scenario& s) {
  json j;
  j["mode"] = s.mode == Mode::finite ? "finite" : "limiting";
  j["kappa"] = s.kappa;
  j["tau"] = s.tau;
  j["classes"] = json::array();
  for (const auto& c : s.classes) {
    json jc;
    if (c.count) jc["count"] = *c.count;
    if (c.fraction) jc["fraction"] = *c.fraction;
    jc["arrival_rate"] = c.arrival_rate;
    jc["tx_prob"] = c.tx_prob;
    j["classes"].push_back(jc);
  }
  if (const auto* a = std::get_if<AllOrNothingMpr>(&s.mpr)) {
    j["mpr"] = {{"kind", "all_or_nothing"}, {"q", a->q}};
  } else {
    const auto& g = std::get<GeneralSymmetricMpr>(s.mpr);
    std::vector<double> flat;
    for (const auto& row : g.rows) flat.insert(flat.end(), row.begin(), row.end());
    j["mpr"] = {{"kind", "general"}, {"q_matrix", flat}};
  }
  return j.dump();
}

void save_scenario(const Scenario& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) bad("cannot write config file '" + path + "'");
  out << scenario_to_json(s) << "\n";
}

}  // namespace csma_mpr
