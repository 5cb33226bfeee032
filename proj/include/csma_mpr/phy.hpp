#pragma once
#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>

namespace csma_mpr {

// Multi-packet reception success probabilities from the physical layer: L
// users transmit simultaneously at message rate R over an i.i.d. Rayleigh
// channel to a K-antenna receiver, and a packet batch is decodable when R is
// below the decoder's achievable symmetric rate for the drawn channel.
//
// Decoders:
//   cf   compute-and-forward: the receiver decodes L integer-linear
//        combinations (rows of an invertible Gaussian-integer matrix A) in
//        parallel and inverts them;
//   scf  successive compute-and-forward: the combinations are decoded one at
//        a time, each aided by the previous ones (Cholesky recursion);
//   sic  successive interference cancellation: scf restricted to permutation
//        matrices A (the corner points of the capacity region);
//   jd   joint decoding: the symmetric point on the capacity-region boundary.

enum class Decoder { sic, cf, scf, jd };

const char* decoder_name(Decoder d);                 // "sic", "cf", "scf", "jd"
Decoder decoder_from_name(const std::string& name);  // throws CONFIG_INVALID

// Practical-code rate penalty: shaping_G is the normalized second moment of
// the shaping lattice (1/12 for a hypercube; 1/(2*pi*e) for an ideal one) and
// vnr_mu the normalized volume-to-noise ratio of the coding lattice at the
// target error probability (2*pi*e for an ideal one).
struct LatticeLoss {
  double shaping_G = 1.0 / 12.0;
  double vnr_mu = 2.0 * M_PI * M_E;  // no-coding-loss reference
};

struct PhyConfig {
  double snr_db = 0.0;
  int K = 1;                 // receive antennas
  double message_rate = 1.0; // R, bits per complex symbol
  Decoder decoder = Decoder::jd;
  long long samples = 100000;
  std::uint64_t seed = 1;
  int a_radius = 2;  // Gaussian-integer coordinate bound for cf/scf search
  std::optional<LatticeLoss> lattice_loss;  // applied to cf/scf/sic only
};

// K x L complex channel; entries i.i.d. CN(0,1).
using ChannelMatrix = Eigen::MatrixXcd;

// Draws entries column by column (users), each via one CN(0,1) draw, so the
// stream consumed from `eng` is pinned by rng.hpp's explicit Box-Muller.
ChannelMatrix sample_channel(int K, int L, std::mt19937_64& eng);

// Achievable symmetric rates in bits per complex symbol, clamped at 0.
// All four reduce to log2(1 + snr*|h|^2) for a single user (L == 1), computed
// through one shared code path so the values agree bit for bit.
//
// cf/scf search invertible Gaussian-integer matrices with |Re|,|Im| <=
// a_radius per entry: exhaustively (up to units) for L <= 2, via a top-200
// candidate list for L == 3, and greedily for L == 4; L > 4 throws
// TOO_MANY_USERS (the bounded search space grows as (2r+1)^(2L)).
// sic enumerates all L! decoding orders (L <= 6); jd enumerates all 2^L - 1
// user subsets (L <= 16).
double rate_cf(const ChannelMatrix& H, double snr, int a_radius);
double rate_scf(const ChannelMatrix& H, double snr, int a_radius);
double rate_sic(const ChannelMatrix& H, double snr);
double rate_jd(const ChannelMatrix& H, double snr);

// rate - log2(2*pi*e*shaping_G) - log2(vnr_mu/(2*pi*e)), clamped at 0.
double practical_rate_adjustment(double rate, double shaping_G, double vnr_mu);

struct QEstimate {
  double q_hat = 0.0;            // fraction of draws with R < symmetric rate
  double ci_half_width = 0.0;    // 1.96 * sqrt(q(1-q)/samples)
  long long samples = 0;
  long long failed_samples = 0;  // decoder errors, counted as non-success
};

// Monte Carlo estimate of q_L for cfg.decoder. Sample i uses an engine seeded
// with stream_seed(cfg.seed, i), so the result is bit-identical no matter how
// the loop is split across threads (set CSMA_MPR_THREADS to parallelize).
QEstimate estimate_q(const PhyConfig& cfg, int L);

}  // namespace csma_mpr
