#pragma once
#include <stdexcept>
#include <string>

namespace csma_mpr {

// Failure classes surfaced by the library. The CLI maps them to exit codes:
// configuration errors -> 2, numerical/model errors -> 3, infeasible designs -> 4.
enum class Err {
  config_invalid,    // scenario/config fails validation
  unstable_input,    // utilization vector has a component >= 1 where stability is required
  zero_arrival,      // per-packet metric requested for a class with zero arrivals
  non_unimodal,      // rate function not covered by the unimodality condition and no fallback
  no_convergence,    // iterative scheme exceeded its cap
  infeasible,        // design target cannot be met
  search_exhausted,  // integer search space contains no valid matrix
  cholesky_fail,     // Gram matrix not numerically positive definite
  too_many_users,    // combinatorial search beyond supported size
  state_explosion,   // exact chain too large to enumerate
  reducible,         // chain not irreducible; stationary law undefined
};

const char* err_name(Err e);

class Error : public std::runtime_error {
 public:
  Error(Err code, const std::string& msg)
      : std::runtime_error(std::string(err_name(code)) + ": " + msg), code_(code) {}
  Err code() const { return code_; }

 private:
  Err code_;
};

[[noreturn]] inline void fail(Err code, const std::string& msg) { throw Error(code, msg); }

}  // namespace csma_mpr
