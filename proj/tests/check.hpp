#pragma once
#include <cmath>
#include <cstdio>

#include "csma_mpr/errors.hpp"

// Minimal test harness: CHECK* macros tally failures, check_summary() prints
// one line and returns the process exit code.

inline int& check_failures() {
  static int n = 0;
  return n;
}
inline int& check_count() {
  static int n = 0;
  return n;
}

inline bool check_report(bool ok, const char* what, const char* file, int line) {
  ++check_count();
  if (!ok) {
    ++check_failures();
    std::printf("FAIL %s:%d  %s\n", file, line, what);
  }
  return ok;
}

inline bool check_near_impl(double a, double b, double tol, const char* what,
                            const char* file, int line) {
  const bool ok = std::isfinite(a) && std::isfinite(b) && std::abs(a - b) <= tol;
  ++check_count();
  if (!ok) {
    ++check_failures();
    std::printf("FAIL %s:%d  %s  (%.17g vs %.17g, tol %.3g)\n", file, line, what, a, b,
                tol);
  }
  return ok;
}

#define CHECK(cond) check_report(static_cast<bool>(cond), #cond, __FILE__, __LINE__)
#define CHECK_NEAR(a, b, tol) \
  check_near_impl((a), (b), (tol), #a " ~ " #b, __FILE__, __LINE__)

#define CHECK_THROWS(expr, want)                                                  \
  do {                                                                            \
    bool threw_right_ = false;                                                    \
    try {                                                                         \
      (void)(expr);                                                               \
    } catch (const csma_mpr::Error& e_) {                                         \
      threw_right_ = (e_.code() == (want));                                       \
      if (!threw_right_)                                                          \
        std::printf("  (threw %s instead)\n", csma_mpr::err_name(e_.code()));     \
    } catch (...) {                                                               \
    }                                                                             \
    check_report(threw_right_, #expr " throws " #want, __FILE__, __LINE__);       \
  } while (0)

inline int check_summary(const char* name) {
  if (check_failures() == 0) {
    std::printf("%s: %d checks passed\n", name, check_count());
    return 0;
  }
  std::printf("%s: %d of %d checks FAILED\n", name, check_failures(), check_count());
  return 1;
}
