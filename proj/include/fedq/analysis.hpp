#pragma once

// Closed-form convergence bounds for compressed federated Q-learning and the
// per-round communication cost model.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedq/compression.hpp"
#include "fedq/error.hpp"

namespace fedq::analysis {

/// Linear rate of the server iterate: 1 - beta + beta (1 - eta)^K.
double rho(double beta, double eta, std::size_t local_epochs);

struct BoundParams {
  double beta = 1.0;
  double eta = 1.0;
  double gamma = 0.8;
  std::size_t local_epochs = 1;  // K
  std::size_t rounds = 1;        // T
  std::size_t n_agents = 1;      // I
  double delta = 0.05;           // failure probability
  std::size_t n_states = 1;
  std::size_t n_actions = 1;
  double q2 = 0.0;
  double q_inf = 0.0;
  double alpha = 1.0;
  double q0_gap = 0.0;  // ||Qbar_0 - Q*||_inf
  /// Reward scale. The bounds are stated for rewards in [0, 1]; every
  /// residual term is multiplied by r_max for |r| <= r_max.
  double r_max = 1.0;
};

/// Right-hand side of the bound split into its terms.
struct BoundTerms {
  double transient = 0.0;    // rho^T * q0_gap
  double sampling = 0.0;     // concentration term, shrinks like 1/sqrt(I)
  double bias = 0.0;         // 2 gamma / C
  double compression = 0.0;  // e2 / sqrt(I), or the error-feedback term
  double total() const noexcept { return transient + sampling + bias + compression; }
};

/// Unbiased compression with direct uploads:
///   rho^T q0 + sqrt(eta/I) e1 + 2 gamma / C + e2 / sqrt(I)
///   C  = (1 - gamma)(1 - (1 - eta)^K)
///   e1 = 4 gamma / C * sqrt(L) * (1 + sqrt(L) / sqrt(eta I)),  L = log(4|S||A|TK/delta)
///   e2 = [sqrt(16 * 4 q2 |S||A| / (1-gamma)^2 * log(4T/delta))
///         + 4/3 * 2 q_inf sqrt(I) / (1-gamma) * log(4T/delta)] / (1 - (1-eta)^K)
BoundTerms theorem1_terms(const BoundParams& p);
double theorem1_bound(const BoundParams& p);

/// Biased compression with error feedback:
///   rho^T q0 + 4/C sqrt(eta/I * L') e1 + 2 gamma / C + 2 beta (1-alpha) / (alpha (1-gamma)) D
///   L' = log(2|S||A|TK/delta), e1 = 1 + sqrt(L') / sqrt(eta I)
///   D  = 1 + (1 + (1-eta)^K) / (1 - (1-eta)^K)
BoundTerms theorem2_terms(const BoundParams& p);
double theorem2_bound(const BoundParams& p);

struct BitModel {
  unsigned fpp = 32;
};

/// Bits one agent sends in one round: d * fpp uncompressed, otherwise
/// entries * (ceil(log2 d) + fpp).
std::uint64_t payload_bits(CompressorKind kind, std::size_t dimension, std::size_t entries,
                           BitModel bits = {});

struct AlphaTrace {
  std::vector<double> alpha;          // one per non-skipped round
  std::vector<std::size_t> rounds;    // round index of each alpha
  std::vector<std::size_t> skipped;   // rounds whose vector was zero
  double alpha_min = 1.0;
  bool hypothesis_violated = false;   // some alpha == 0
};

/// contraction_alpha for each round's pre-compression vector.
AlphaTrace estimate_alpha_trace(std::span<const std::vector<double>> trace, std::size_t k);

}  // namespace fedq::analysis
