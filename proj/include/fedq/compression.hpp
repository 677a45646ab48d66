#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedq/error.hpp"
#include "fedq/rng.hpp"

namespace fedq {

enum class CompressorKind { Identity, TopK, SparsifiedK };

/// How Sparsified-K turns the budget into per-coordinate probabilities.
///   L1:      p_j = min(1, k |v_j| / ||v||_1)
///   Uniform: p_j = min(1, k / d) on the support of v
enum class SparsifiedRule { L1, Uniform };

struct CompressorSpec {
  CompressorKind kind = CompressorKind::Identity;
  std::size_t k = 0;
  SparsifiedRule rule = SparsifiedRule::L1;

  /// Biased operators pair with error feedback in the reference algorithm.
  bool biased() const noexcept { return kind == CompressorKind::TopK; }

  /// Throws BudgetOutOfRange unless 1 <= k <= d (Identity ignores k).
  void validate(std::size_t dimension) const;
};

/// Sparse payload: strictly increasing indices below `dimension`.
struct SparseVector {
  std::size_t dimension = 0;
  std::vector<std::uint32_t> indices;
  std::vector<double> values;

  std::size_t entries() const noexcept { return indices.size(); }
  bool empty() const noexcept { return indices.empty(); }

  std::vector<double> densify() const;
  /// out[idx] += value for every stored entry.
  void add_to(std::span<double> out) const;
  /// Dense vector copied into sparse form, zeros dropped.
  static SparseVector from_dense(std::span<const double> v);
  /// Every coordinate kept, zeros included (the uncompressed payload).
  static SparseVector full(std::span<const double> v);

  friend bool operator==(const SparseVector&, const SparseVector&) = default;
};

/// K largest |v_i| among the nonzero coordinates, lower index first on ties.
SparseVector top_k(std::span<const double> v, std::size_t k);

/// 1 - max_{j outside top_k(v,k)} |v_j| / ||v||_inf. Zero means the
/// contraction hypothesis fails for this vector. Throws ZeroVector for v = 0.
double contraction_alpha(std::span<const double> v, std::size_t k);

/// Keep probabilities used by sparsified_k (zero off the support).
std::vector<double> selection_probabilities(std::span<const double> v, std::size_t k,
                                            SparsifiedRule rule = SparsifiedRule::L1);

/// Unbiased random sparsification: coordinate j survives with probability
/// p_j and is rescaled to v_j / p_j. Draws one uniform per support entry.
SparseVector sparsified_k(std::span<const double> v, std::size_t k, RngStream& rng,
                          SparsifiedRule rule = SparsifiedRule::L1);

struct CompressorConstants {
  double q2 = 0.0;
  double q_inf = 0.0;
  double alpha = 1.0;
};

/// Per-vector constants of the operator: q2 = 1/p_min - 1 and
/// q_inf = max(q2, 1) with p_min over the support (Sparsified-K), alpha from
/// contraction_alpha (Top-K), or the identity constants (0, 0, 1). A zero
/// vector compresses without error and reports the identity constants.
CompressorConstants compressor_constants(std::span<const double> v, const CompressorSpec& spec);

/// Applies the operator named by spec. Identity returns SparseVector::full(v).
SparseVector compress(std::span<const double> v, const CompressorSpec& spec, RngStream& rng);

/// Memoryless upload: h = compress(delta).
SparseVector direct_compress(std::span<const double> delta, const CompressorSpec& spec,
                             RngStream& rng);

/// Per-agent error memory, zero at start.
class EfState {
 public:
  EfState() = default;
  explicit EfState(std::size_t dimension) : error_(dimension, 0.0) {}

  std::span<const double> error() const noexcept { return error_; }
  std::size_t dimension() const noexcept { return error_.size(); }

 private:
  std::vector<double> error_;
  std::vector<double> scratch_;

  friend SparseVector ef_compress(EfState&, std::span<const double>, const CompressorSpec&,
                                  RngStream&, CompressorConstants*);
};

/// Error-feedback upload: h = compress(delta + e), then e <- delta + e - h.
/// When `constants` is non-null it receives the constants of the vector that
/// was actually compressed (delta + e).
SparseVector ef_compress(EfState& state, std::span<const double> delta, const CompressorSpec& spec,
                         RngStream& rng, CompressorConstants* constants = nullptr);

/// ceil(log2(d)), the bits needed to address one of d coordinates.
unsigned index_bits(std::size_t dimension) noexcept;

/// Packs entries as index_bits(d)-bit indices followed by 32-bit floats,
/// least significant bit first. The stream holds exactly
/// entries * (index_bits + 32) bits, padded to whole bytes.
std::vector<std::uint8_t> encode_payload(const SparseVector& h);

/// Inverse of encode_payload; values come back rounded to float.
SparseVector decode_payload(std::span<const std::uint8_t> bytes, std::size_t dimension,
                            std::size_t entries);

}  // namespace fedq
