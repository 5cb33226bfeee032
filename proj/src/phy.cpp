#include "csma_mpr/phy.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <climits>
#include <cmath>
#include <limits>
#include <complex>
#include <cstdlib>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <thread>
#include <utility>
#include <vector>

#include "csma_mpr/errors.hpp"
#include "csma_mpr/rng.hpp"

namespace csma_mpr {
namespace {

using cplx = std::complex<double>;

constexpr int kMaxSearchL = 4;  // cf/scf integer-search population bound
constexpr int kMaxSicL = 6;     // factorial enumeration bound
constexpr int kMaxJdL = 16;     // subset enumeration bound
constexpr int kTopL3 = 200;     // candidate-list width for the L=3 scf search

// ---- exact Gaussian-integer arithmetic (components in int64) ----

struct Gint {
  long long re = 0, im = 0;
};
inline Gint gadd(Gint a, Gint b) { return {a.re + b.re, a.im + b.im}; }
inline Gint gsub(Gint a, Gint b) { return {a.re - b.re, a.im - b.im}; }
inline Gint gmul(Gint a, Gint b) {
  return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re};
}
inline Gint gconj(Gint a) { return {a.re, -a.im}; }
inline long long gnorm(Gint a) { return a.re * a.re + a.im * a.im; }
inline bool gzero(Gint a) { return a.re == 0 && a.im == 0; }

// Euclid with rounded quotients; |remainder| < |divisor| guarantees progress.
Gint ggcd(Gint a, Gint b) {
  while (!gzero(b)) {
    const long long n = gnorm(b);
    const Gint ab = gmul(a, gconj(b));
    const Gint q{std::llround(static_cast<double>(ab.re) / n),
                 std::llround(static_cast<double>(ab.im) / n)};
    const Gint r = gsub(a, gmul(q, b));
    a = b;
    b = r;
  }
  return a;
}

// ---- candidate vectors for the integer-matrix search ----
//
// All nonzero Gaussian-integer vectors with coordinates bounded by the radius,
// kept up to multiplication by a unit (1, i, -1, -i): the canonical
// representative has its first nonzero coordinate with Re > 0 and Im >= 0.
// Unit scaling changes neither quadratic forms nor |det|, so nothing is lost.

struct CandSet {
  int L = 0;
  int radius = 0;
  int count = 0;
  std::vector<std::array<Gint, kMaxSearchL>> gi;
  std::vector<std::array<cplx, kMaxSearchL>> vc;
  // L == 2 only: for each candidate a, the minimal |det(a, b)|^2 over all
  // in-radius b with det != 0 (unit scaling of b keeps |det| fixed).
  std::vector<long long> mindet2;
};

const CandSet& candidate_set(int L, int radius) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, CandSet> cache;
  std::lock_guard<std::mutex> lock(mu);
  const auto key = std::make_pair(L, radius);
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  CandSet cs;
  cs.L = L;
  cs.radius = radius;
  std::array<Gint, kMaxSearchL> v{};
  const int side = 2 * radius + 1;
  long long total = 1;
  for (int i = 0; i < 2 * L; ++i) total *= side;
  for (long long code = 0; code < total; ++code) {
    long long rest = code;
    for (int c = 0; c < L; ++c) {
      v[c].re = static_cast<int>(rest % side) - radius;
      rest /= side;
      v[c].im = static_cast<int>(rest % side) - radius;
      rest /= side;
    }
    int first = -1;
    for (int c = 0; c < L && first < 0; ++c)
      if (!gzero(v[c])) first = c;
    if (first < 0) continue;                                   // zero vector
    if (!(v[first].re > 0 && v[first].im >= 0)) continue;      // unit orbit rep
    std::array<cplx, kMaxSearchL> vcx{};
    for (int c = 0; c < L; ++c)
      vcx[c] = cplx(static_cast<double>(v[c].re), static_cast<double>(v[c].im));
    cs.gi.push_back(v);
    cs.vc.push_back(vcx);
  }
  cs.count = static_cast<int>(cs.gi.size());

  if (L == 2) {
    cs.mindet2.resize(cs.count, LLONG_MAX);
    for (int i = 0; i < cs.count; ++i) {
      for (int j = 0; j < cs.count; ++j) {
        const Gint det = gsub(gmul(cs.gi[i][0], cs.gi[j][1]),
                              gmul(cs.gi[i][1], cs.gi[j][0]));
        const long long n = gnorm(det);
        if (n > 0 && n < cs.mindet2[i]) cs.mindet2[i] = n;
      }
    }
  }
  return cache.emplace(key, std::move(cs)).first->second;
}

// Exact linear-independence bookkeeping for up to kMaxSearchL integer rows:
// rows are reduced against an echelon set by cross-multiplication (no
// division, so everything stays in the Gaussian integers; entries stay tiny).
struct IntEchelon {
  int L = 0;
  std::vector<std::array<Gint, kMaxSearchL>> rows;  // echelon, one pivot each
  std::vector<int> pivot;

  explicit IntEchelon(int l) : L(l) {}
  int size() const { return static_cast<int>(rows.size()); }

  // True (and absorbs the row) if r is independent of the current set.
  bool try_add(std::array<Gint, kMaxSearchL> r) {
    for (int k = 0; k < size(); ++k) {
      const Gint c = r[pivot[k]];
      if (gzero(c)) continue;
      const Gint p = rows[k][pivot[k]];
      for (int j = 0; j < L; ++j) r[j] = gsub(gmul(r[j], p), gmul(rows[k][j], c));
    }
    int pv = -1;
    for (int j = 0; j < L && pv < 0; ++j)
      if (!gzero(r[j])) pv = j;
    if (pv < 0) return false;
    rows.push_back(r);
    pivot.push_back(pv);
    return true;
  }
};

// ---- per-sample machinery ----

struct RateWork {
  int L = 0;
  const CandSet* cands = nullptr;
  std::array<cplx, kMaxSearchL * kMaxSearchL> g{};  // (I + snr H^H H)^{-1}
  double det_g = 0.0;                               // det of the above
  std::vector<double> form;                         // candidate quadratic forms
  std::vector<int> order;                           // candidates by rising form
  std::vector<int> chosen;                          // cf greedy basis (indices)

  cplx gat(int r, int c) const { return g[r * kMaxSearchL + c]; }
};

// Max diagonal of the Cholesky factor squared, i.e. max_l L_ll^2 for
// M = L L^H; nullopt when M is not numerically positive definite.
std::optional<double> chol_max_diag(const cplx* m, int n) {
  std::array<cplx, kMaxSicL * kMaxSicL> w{};
  for (int i = 0; i < n * n; ++i) w[i] = m[i];
  auto at = [&](int r, int c) -> cplx& { return w[r * n + c]; };
  double best = 0.0;
  for (int j = 0; j < n; ++j) {
    double d = at(j, j).real();
    for (int k = 0; k < j; ++k) d -= std::norm(at(j, k));
    if (!(d > 0.0)) return std::nullopt;
    best = std::max(best, d);
    const double inv = 1.0 / std::sqrt(d);
    at(j, j) = inv * d;  // L_jj
    for (int i = j + 1; i < n; ++i) {
      cplx s = at(i, j);
      for (int k = 0; k < j; ++k) s -= at(i, k) * std::conj(at(j, k));
      at(i, j) = s * inv;
    }
  }
  return best;
}

// chol_max_diag with one symmetric-jitter retry; still-failing matrices are a
// conditioning signal and surface as an error.
double chol_max_diag_checked(const cplx* m, int n) {
  if (auto d = chol_max_diag(m, n)) return *d;
  std::array<cplx, kMaxSicL * kMaxSicL> w{};
  for (int i = 0; i < n * n; ++i) w[i] = m[i];
  for (int i = 0; i < n; ++i) w[i * n + i] += 1e-12;
  if (auto d = chol_max_diag(w.data(), n)) return *d;
  fail(Err::cholesky_fail, "effective-noise matrix is not positive definite");
}

void gram_setup(RateWork& w, const ChannelMatrix& H, double snr) {
  const int L = static_cast<int>(H.cols());
  w.L = L;
  Eigen::MatrixXcd M = Eigen::MatrixXcd::Identity(L, L);
  M.noalias() += snr * H.adjoint() * H;
  const Eigen::LLT<Eigen::MatrixXcd> llt(M);
  double logdet = 0.0;
  for (int i = 0; i < L; ++i) logdet += std::log(llt.matrixL()(i, i).real());
  w.det_g = std::exp(-2.0 * logdet);  // det(M^{-1})
  const Eigen::MatrixXcd G = llt.solve(Eigen::MatrixXcd::Identity(L, L));
  for (int r = 0; r < L; ++r)
    for (int c = 0; c < L; ++c) w.g[r * kMaxSearchL + c] = G(r, c);
}

void compute_forms(RateWork& w) {
  const CandSet& cs = *w.cands;
  const int L = w.L;
  w.form.resize(cs.count);
  for (int i = 0; i < cs.count; ++i) {
    const auto& v = cs.vc[i];
    double nu = 0.0;
    for (int a = 0; a < L; ++a) {
      cplx t = 0.0;
      for (int b = 0; b < L; ++b) t += w.gat(a, b) * std::conj(v[b]);
      nu += (v[a] * t).real();
    }
    w.form[i] = nu;
  }
}

void sort_by_form(RateWork& w) {
  w.order.resize(w.form.size());
  std::iota(w.order.begin(), w.order.end(), 0);
  std::sort(w.order.begin(), w.order.end(),
            [&](int a, int b) { return w.form[a] < w.form[b]; });
}

// v_row * G * v_col^H for two candidates.
cplx cross_form(const RateWork& w, int row, int col) {
  const CandSet& cs = *w.cands;
  cplx s = 0.0;
  for (int a = 0; a < w.L; ++a) {
    cplx t = 0.0;
    for (int b = 0; b < w.L; ++b) t += w.gat(a, b) * std::conj(cs.vc[col][b]);
    s += cs.vc[row][a] * t;
  }
  return s;
}

// Exact greedy basis: candidates by ascending form, kept when linearly
// independent of those already chosen. Over a linear matroid this minimizes
// the largest chosen form, so the cf objective is exact within the radius.
// Returns that largest form; fills w.chosen. Infinity if no basis exists
// (impossible for radius >= 1: the unit rows qualify).
double cf_best_obj(RateWork& w) {
  const CandSet& cs = *w.cands;
  w.chosen.clear();
  IntEchelon ech(w.L);
  double worst = 0.0;
  for (int idx : w.order) {
    if (!ech.try_add(cs.gi[idx])) continue;
    w.chosen.push_back(idx);
    worst = std::max(worst, w.form[idx]);
    if (ech.size() == w.L) return worst;
  }
  return std::numeric_limits<double>::infinity();
}

// cf success test at threshold t: does some invertible in-radius A have every
// row form below t? Equivalent to the greedy result being below t, but needs
// no sort: rank-test the candidates whose form clears the bar.
bool cf_reaches(RateWork& w, double t) {
  const CandSet& cs = *w.cands;
  IntEchelon ech(w.L);
  for (int i = 0; i < cs.count; ++i) {
    if (!(w.form[i] < t)) continue;
    if (ech.try_add(cs.gi[i]) && ech.size() == w.L) return true;
  }
  return false;
}

// Best successive objective for L == 2, exact within the radius: with first
// row a fixed, the second Cholesky diagonal is |det A|^2 det(G) / form(a),
// minimized by the smallest achievable |det|^2 (precomputed per candidate).
double scf2_best_obj(RateWork& w, double stop_below) {
  const CandSet& cs = *w.cands;
  double best = std::numeric_limits<double>::infinity();
  for (int idx : w.order) {
    const double d1 = w.form[idx];
    if (d1 >= best) break;
    const double d2 =
        static_cast<double>(cs.mindet2[idx]) * w.det_g / d1;
    best = std::min(best, std::max(d1, d2));
    if (best < stop_below) break;
  }
  return best;
}

// Smallest nonzero |det|^2 completing rows (i, j) with a third in-radius row:
// det is the inner product of the row with the pair's cofactor vector, so the
// Gaussian gcd of the cofactors bounds the minimum and stops the scan early.
long long min_completion_det2(const CandSet& cs, const std::array<Gint, 3>& cof) {
  const long long lb = gnorm(ggcd(cof[0], ggcd(cof[1], cof[2])));
  if (lb == 0) return LLONG_MAX;  // degenerate pair
  long long best = LLONG_MAX;
  for (int c = 0; c < cs.count; ++c) {
    Gint det{0, 0};
    for (int k = 0; k < 3; ++k) det = gadd(det, gmul(cs.gi[c][k], cof[k]));
    const long long n = gnorm(det);
    if (n > 0 && n < best) {
      best = n;
      if (best <= lb) break;
    }
  }
  return best;
}

// Evaluate max_l L_ll^2 for A with the given candidate rows (in order).
double rows_obj(const RateWork& w, const int* rows, int n) {
  std::array<cplx, kMaxSicL * kMaxSicL> m{};
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) m[r * n + c] = cross_form(w, rows[r], rows[c]);
  return chol_max_diag_checked(m.data(), n);
}

double perms_best_obj(const RateWork& w) {
  std::array<int, kMaxSicL> p{};
  std::iota(p.begin(), p.begin() + w.L, 0);
  double best = std::numeric_limits<double>::infinity();
  std::array<cplx, kMaxSicL * kMaxSicL> m{};
  do {
    for (int r = 0; r < w.L; ++r)
      for (int c = 0; c < w.L; ++c) m[r * w.L + c] = w.gat(p[r], p[c]);
    best = std::min(best, chol_max_diag_checked(m.data(), w.L));
  } while (std::next_permutation(p.begin(), p.begin() + w.L));
  return best;
}

// Bounded successive search for L == 3: start from the decoding-order corner
// points and the cf basis in every row order, then scan ordered pairs from
// the lowest-form candidates, completing each with the minimal-determinant
// third row. Product and determinant bounds prune the scan.
double scf3_best_obj(RateWork& w, double stop_below) {
  const CandSet& cs = *w.cands;
  double best = perms_best_obj(w);
  if (best < stop_below) return best;

  if (cf_best_obj(w) < std::numeric_limits<double>::infinity()) {
    std::array<int, 3> rows{w.chosen[0], w.chosen[1], w.chosen[2]};
    std::sort(rows.begin(), rows.end());
    do {
      best = std::min(best, rows_obj(w, rows.data(), 3));
    } while (std::next_permutation(rows.begin(), rows.end()));
    if (best < stop_below) return best;
  }

  const int top = std::min<int>(kTopL3, cs.count);
  // Cache G v^H for the short list once.
  std::vector<std::array<cplx, 3>> gv(top);
  for (int ii = 0; ii < top; ++ii) {
    const auto& v = cs.vc[w.order[ii]];
    for (int a = 0; a < 3; ++a) {
      cplx t = 0.0;
      for (int b = 0; b < 3; ++b) t += w.gat(a, b) * std::conj(v[b]);
      gv[ii][a] = t;
    }
  }
  for (int ii = 0; ii < top; ++ii) {
    const int i = w.order[ii];
    const double d1 = w.form[i];
    if (d1 >= best) break;
    for (int jj = 0; jj < top; ++jj) {
      if (jj == ii) continue;
      const int j = w.order[jj];
      cplx cr = 0.0;
      for (int a = 0; a < 3; ++a) cr += cs.vc[j][a] * gv[ii][a];
      const double d2 = w.form[j] - std::norm(cr) / d1;
      if (!(d2 > 1e-300)) continue;  // dependent pair
      const double lo = std::max(d1, d2);
      if (lo >= best) continue;
      if (std::max(lo, w.det_g / (d1 * d2)) >= best) continue;  // |det|^2 >= 1
      const auto& a = cs.gi[i];
      const auto& b = cs.gi[j];
      const std::array<Gint, 3> cof{
          gsub(gmul(a[1], b[2]), gmul(a[2], b[1])),
          gsub(gmul(a[2], b[0]), gmul(a[0], b[2])),
          gsub(gmul(a[0], b[1]), gmul(a[1], b[0]))};
      const long long md = min_completion_det2(cs, cof);
      if (md == LLONG_MAX) continue;
      const double d3 = static_cast<double>(md) * w.det_g / (d1 * d2);
      best = std::min(best, std::max(lo, d3));
      if (best < stop_below) return best;
    }
  }
  return best;
}

// L == 4 successive search: corner points plus the cf basis in a few orders
// (full order enumeration is cheap at 24).
double scf4_best_obj(RateWork& w) {
  double best = perms_best_obj(w);
  if (cf_best_obj(w) < std::numeric_limits<double>::infinity()) {
    std::array<int, 4> rows{w.chosen[0], w.chosen[1], w.chosen[2], w.chosen[3]};
    std::sort(rows.begin(), rows.end());
    do {
      best = std::min(best, rows_obj(w, rows.data(), 4));
    } while (std::next_permutation(rows.begin(), rows.end()));
  }
  return best;
}

double scf_best_obj(RateWork& w, double stop_below) {
  switch (w.L) {
    case 2:
      return scf2_best_obj(w, stop_below);
    case 3:
      return scf3_best_obj(w, stop_below);
    default:
      return scf4_best_obj(w);
  }
}

// ---- shared dispatch helpers ----

double clamp_rate(double obj) {
  const double r = -std::log2(obj);
  return r > 0.0 ? r : 0.0;
}

double one_user_rate(const ChannelMatrix& H, double snr) {
  return std::log2(1.0 + snr * H.col(0).squaredNorm());
}

void check_channel(const ChannelMatrix& H, double snr) {
  if (H.rows() < 1 || H.cols() < 1)
    fail(Err::config_invalid, "channel matrix must have positive dimensions");
  if (!H.allFinite())
    fail(Err::config_invalid, "channel matrix has non-finite entries");
  if (!(snr > 0.0)) fail(Err::config_invalid, "snr must be positive");
}

void check_search_size(int L, int a_radius) {
  if (a_radius < 1)
    fail(Err::config_invalid, "a_radius must be at least 1 for the integer search");
  if (L > kMaxSearchL)
    fail(Err::too_many_users,
         "integer-matrix search supports at most " + std::to_string(kMaxSearchL) +
             " concurrent users, got " + std::to_string(L));
  // Caps keep the candidate tables in memory and the exact int64 arithmetic
  // free of overflow; the search is exhaustive within radius, so these bound
  // work per sample as well.
  static constexpr int kMaxRadius[kMaxSearchL + 1] = {0, 0, 8, 5, 2};
  if (L >= 2 && a_radius > kMaxRadius[L])
    fail(Err::config_invalid,
         "a_radius " + std::to_string(a_radius) + " exceeds the exact-search cap " +
             std::to_string(kMaxRadius[L]) + " for " + std::to_string(L) + " users");
}

double jd_subset_rate(const ChannelMatrix& H, double snr, unsigned mask) {
  const int K = static_cast<int>(H.rows());
  int size = 0;
  if (K == 1) {
    double s = 0.0;
    for (int l = 0; l < H.cols(); ++l)
      if ((mask >> l) & 1u) {
        s += std::norm(H(0, l));
        ++size;
      }
    return std::log2(1.0 + snr * s) / size;
  }
  if (K == 2) {
    double m00 = 1.0, m11 = 1.0;
    cplx m01 = 0.0;
    for (int l = 0; l < H.cols(); ++l)
      if ((mask >> l) & 1u) {
        m00 += snr * std::norm(H(0, l));
        m11 += snr * std::norm(H(1, l));
        m01 += snr * H(0, l) * std::conj(H(1, l));
        ++size;
      }
    return std::log2(m00 * m11 - std::norm(m01)) / size;
  }
  Eigen::MatrixXcd M = Eigen::MatrixXcd::Identity(K, K);
  for (int l = 0; l < H.cols(); ++l)
    if ((mask >> l) & 1u) {
      M.noalias() += snr * H.col(l) * H.col(l).adjoint();
      ++size;
    }
  const Eigen::LLT<Eigen::MatrixXcd> llt(M);
  double logdet = 0.0;
  for (int i = 0; i < K; ++i) logdet += std::log2(llt.matrixL()(i, i).real());
  return 2.0 * logdet / size;
}

double rate_jd_impl(const ChannelMatrix& H, double snr) {
  const int L = static_cast<int>(H.cols());
  double worst = std::numeric_limits<double>::infinity();
  for (unsigned mask = 1; mask < (1u << L); ++mask)
    worst = std::min(worst, jd_subset_rate(H, snr, mask));
  return std::max(0.0, worst);
}

}  // namespace

const char* decoder_name(Decoder d) {
  switch (d) {
    case Decoder::sic:
      return "sic";
    case Decoder::cf:
      return "cf";
    case Decoder::scf:
      return "scf";
    case Decoder::jd:
      return "jd";
  }
  return "?";
}

Decoder decoder_from_name(const std::string& name) {
  std::string s;
  for (char c : name) s.push_back(static_cast<char>(std::tolower(c)));
  if (s == "sic") return Decoder::sic;
  if (s == "cf") return Decoder::cf;
  if (s == "scf") return Decoder::scf;
  if (s == "jd") return Decoder::jd;
  fail(Err::config_invalid,
       "unknown decoder '" + name + "' (expected sic, cf, scf, or jd)");
}

ChannelMatrix sample_channel(int K, int L, std::mt19937_64& eng) {
  if (K < 1 || L < 1)
    fail(Err::config_invalid, "channel dimensions must be positive");
  ChannelMatrix H(K, L);
  for (int l = 0; l < L; ++l)
    for (int k = 0; k < K; ++k) H(k, l) = complex_gaussian(eng);
  return H;
}

double rate_cf(const ChannelMatrix& H, double snr, int a_radius) {
  check_channel(H, snr);
  const int L = static_cast<int>(H.cols());
  if (L == 1) return one_user_rate(H, snr);
  check_search_size(L, a_radius);
  RateWork w;
  w.cands = &candidate_set(L, a_radius);
  gram_setup(w, H, snr);
  compute_forms(w);
  sort_by_form(w);
  const double obj = cf_best_obj(w);
  if (!std::isfinite(obj))
    fail(Err::search_exhausted, "no invertible integer matrix within the radius");
  return clamp_rate(obj);
}

double rate_scf(const ChannelMatrix& H, double snr, int a_radius) {
  check_channel(H, snr);
  const int L = static_cast<int>(H.cols());
  if (L == 1) return one_user_rate(H, snr);
  check_search_size(L, a_radius);
  RateWork w;
  w.cands = &candidate_set(L, a_radius);
  gram_setup(w, H, snr);
  compute_forms(w);
  sort_by_form(w);
  const double obj = scf_best_obj(w, 0.0);
  if (!std::isfinite(obj))
    fail(Err::search_exhausted, "no invertible integer matrix within the radius");
  return clamp_rate(obj);
}

double rate_sic(const ChannelMatrix& H, double snr) {
  check_channel(H, snr);
  const int L = static_cast<int>(H.cols());
  if (L == 1) return one_user_rate(H, snr);
  if (L > kMaxSicL)
    fail(Err::too_many_users,
         "decoding-order enumeration supports at most 6 users, got " +
             std::to_string(L));
  RateWork w;
  gram_setup(w, H, snr);
  return clamp_rate(perms_best_obj(w));
}

double rate_jd(const ChannelMatrix& H, double snr) {
  check_channel(H, snr);
  const int L = static_cast<int>(H.cols());
  if (L == 1) return one_user_rate(H, snr);
  if (L > kMaxJdL)
    fail(Err::too_many_users,
         "subset enumeration supports at most 16 users, got " + std::to_string(L));
  return rate_jd_impl(H, snr);
}

double practical_rate_adjustment(double rate, double shaping_G, double vnr_mu) {
  if (!(shaping_G > 0.0) || !(vnr_mu > 0.0))
    fail(Err::config_invalid, "lattice-loss parameters must be positive");
  const double two_pi_e = 2.0 * M_PI * M_E;
  const double adjusted =
      rate - std::log2(two_pi_e * shaping_G) - std::log2(vnr_mu / two_pi_e);
  return adjusted > 0.0 ? adjusted : 0.0;
}

QEstimate estimate_q(const PhyConfig& cfg, int L) {
  if (cfg.samples < 1) fail(Err::config_invalid, "samples must be at least 1");
  if (cfg.K < 1) fail(Err::config_invalid, "K must be at least 1");
  if (L < 1) fail(Err::config_invalid, "L must be at least 1");
  const double snr = std::pow(10.0, cfg.snr_db / 10.0);
  const bool lattice = cfg.lattice_loss.has_value() && cfg.decoder != Decoder::jd;
  double loss = 0.0;
  if (lattice) {
    const auto& ll = *cfg.lattice_loss;
    if (!(ll.shaping_G > 0.0) || !(ll.vnr_mu > 0.0))
      fail(Err::config_invalid, "lattice-loss parameters must be positive");
    const double two_pi_e = 2.0 * M_PI * M_E;
    loss = std::log2(two_pi_e * ll.shaping_G) + std::log2(ll.vnr_mu / two_pi_e);
  }
  const double rate_bar = cfg.message_rate + loss;  // raw rate must exceed this
  const double obj_bar = std::exp2(-rate_bar);      // equivalently obj below this

  const CandSet* cands = nullptr;
  if (L > 1) {
    switch (cfg.decoder) {
      case Decoder::cf:
      case Decoder::scf:
        check_search_size(L, cfg.a_radius);
        cands = &candidate_set(L, cfg.a_radius);
        break;
      case Decoder::sic:
        if (L > kMaxSicL)
          fail(Err::too_many_users,
               "decoding-order enumeration supports at most 6 users, got " +
                   std::to_string(L));
        break;
      case Decoder::jd:
        if (L > kMaxJdL)
          fail(Err::too_many_users,
               "subset enumeration supports at most 16 users, got " +
                   std::to_string(L));
        break;
    }
  }

  // Success indicator for one draw; exact thresholded equivalents of the
  // public rate comparisons (message_rate < clamped rate).
  auto success_for = [&](const ChannelMatrix& H, RateWork& w) -> bool {
    if (cfg.message_rate < 0.0) return true;  // rates are clamped at >= 0
    if (L == 1) {
      const double r = std::max(0.0, one_user_rate(H, snr) - loss);
      return cfg.message_rate < r;
    }
    if (cfg.decoder == Decoder::jd)
      return cfg.message_rate < rate_jd_impl(H, snr);
    gram_setup(w, H, snr);
    // max_l L_ll^2 >= (|det A|^2 det G)^(1/L) >= det(G)^(1/L) for every
    // invertible integer A (Hadamard), so small det(G) settles failure early.
    if (std::pow(w.det_g, 1.0 / L) >= obj_bar) return false;
    if (cfg.decoder == Decoder::sic) return perms_best_obj(w) < obj_bar;
    if (cfg.decoder == Decoder::scf && perms_best_obj(w) < obj_bar) return true;
    w.cands = cands;
    compute_forms(w);
    if (cfg.decoder == Decoder::cf) return cf_reaches(w, obj_bar);
    sort_by_form(w);
    return scf_best_obj(w, obj_bar) < obj_bar;
  };

  int threads = 1;
  if (const char* e = std::getenv("CSMA_MPR_THREADS")) threads = std::atoi(e);
  threads = static_cast<int>(
      std::max<long long>(1, std::min<long long>(threads, cfg.samples)));

  std::vector<long long> ok(threads, 0), bad(threads, 0);
  auto run_chunk = [&](int tid, long long lo, long long hi) {
    RateWork w;
    for (long long i = lo; i < hi; ++i) {
      std::mt19937_64 eng(stream_seed(cfg.seed, static_cast<std::uint64_t>(i)));
      const ChannelMatrix H = sample_channel(cfg.K, L, eng);
      try {
        if (success_for(H, w)) ++ok[tid];
      } catch (const Error&) {
        ++bad[tid];
      }
    }
  };
  if (threads == 1) {
    run_chunk(0, 0, cfg.samples);
  } else {
    std::vector<std::thread> pool;
    const long long chunk = (cfg.samples + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const long long lo = t * chunk;
      const long long hi = std::min<long long>(cfg.samples, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back(run_chunk, t, lo, hi);
    }
    for (auto& th : pool) th.join();
  }

  QEstimate est;
  est.samples = cfg.samples;
  for (int t = 0; t < threads; ++t) {
    est.failed_samples += bad[t];
    est.q_hat += static_cast<double>(ok[t]);
  }
  est.q_hat /= static_cast<double>(cfg.samples);
  est.ci_half_width =
      1.96 * std::sqrt(est.q_hat * (1.0 - est.q_hat) /
                       static_cast<double>(cfg.samples));
  return est;
}

}  // namespace csma_mpr
