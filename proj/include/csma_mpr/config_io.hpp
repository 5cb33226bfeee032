#pragma once
#include <string>

#include "csma_mpr/model.hpp"

namespace csma_mpr {

// Scenario <-> JSON. Key names are part of the CLI contract:
//   mode ("finite"|"limiting", default finite), kappa, tau (default kappa),
//   classes[].count|fraction, classes[].arrival_rate, classes[].tx_prob,
//   mpr.kind ("all_or_nothing" with q, or "general" with q_matrix as the
//   row-major lower triangle [q11, q12, q22, q13, q23, q33, ...]).
// Unknown keys are rejected. The parsed scenario is validated; every problem
// surfaces as Err::config_invalid with a message naming the field.
Scenario scenario_from_json(const std::string& text);
Scenario load_scenario(const std::string& path);

// Canonical single-line JSON: sorted keys, round-trip-exact numbers. The
// canonical form is a fixed point: emitting a parsed canonical string gives
// the same bytes back.
std::string scenario_to_json(const Scenario& s);
void save_scenario(const Scenario& s, const std::string& path);

}  // namespace csma_mpr
