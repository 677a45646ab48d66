#include "fedq/compression.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <string>

#include "fedq/error.hpp"
#include "fedq/kernels.hpp"

namespace fedq {

namespace {

void check_budget(std::size_t k, std::size_t d) {
  if (k < 1 || k > d)
    throw Error(ErrorCode::BudgetOutOfRange,
                "budget " + std::to_string(k) + " outside [1, " + std::to_string(d) + "]");
}

// Indices of the k largest |v_i| among nonzero coordinates, ascending.
std::vector<std::uint32_t> top_k_indices(std::span<const double> v, std::size_t k) {
  std::vector<std::uint32_t> idx;
  idx.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i] != 0.0) idx.push_back(static_cast<std::uint32_t>(i));
  if (idx.size() > k) {
    auto larger = [&](std::uint32_t a, std::uint32_t b) {
      const double fa = std::abs(v[a]);
      const double fb = std::abs(v[b]);
      return fa > fb || (fa == fb && a < b);
    };
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), larger);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

double linf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

void CompressorSpec::validate(std::size_t dimension) const {
  if (kind != CompressorKind::Identity) check_budget(k, dimension);
}

std::vector<double> SparseVector::densify() const {
  std::vector<double> out(dimension, 0.0);
  add_to(out);
  return out;
}

void SparseVector::add_to(std::span<double> out) const {
  if (out.size() != dimension) throw Error(ErrorCode::DimensionMismatch, "sparse payload dimension");
  for (std::size_t j = 0; j < indices.size(); ++j) out[indices[j]] += values[j];
}

SparseVector SparseVector::from_dense(std::span<const double> v) {
  SparseVector h{v.size(), {}, {}};
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] != 0.0) {
      h.indices.push_back(static_cast<std::uint32_t>(i));
      h.values.push_back(v[i]);
    }
  }
  return h;
}

SparseVector SparseVector::full(std::span<const double> v) {
  SparseVector h{v.size(), {}, {v.begin(), v.end()}};
  h.indices.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) h.indices[i] = static_cast<std::uint32_t>(i);
  return h;
}

SparseVector top_k(std::span<const double> v, std::size_t k) {
  check_budget(k, v.size());
  SparseVector h{v.size(), top_k_indices(v, k), {}};
  h.values.reserve(h.indices.size());
  for (std::uint32_t i : h.indices) h.values.push_back(v[i]);
  return h;
}

double contraction_alpha(std::span<const double> v, std::size_t k) {
  check_budget(k, v.size());
  const double norm = linf_norm(v);
  if (norm == 0.0) throw Error(ErrorCode::ZeroVector, "contraction_alpha of the zero vector");
  const auto kept = top_k_indices(v, k);
  double excluded = 0.0;
  std::size_t next = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (next < kept.size() && kept[next] == i) {
      ++next;
      continue;
    }
    excluded = std::max(excluded, std::abs(v[i]));
  }
  return 1.0 - excluded / norm;
}

std::vector<double> selection_probabilities(std::span<const double> v, std::size_t k,
                                            SparsifiedRule rule) {
  check_budget(k, v.size());
  std::vector<double> p(v.size(), 0.0);
  const double budget = static_cast<double>(k);
  if (rule == SparsifiedRule::Uniform) {
    const double q = std::min(1.0, budget / static_cast<double>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i)
      if (v[i] != 0.0) p[i] = q;
    return p;
  }
  double l1 = 0.0;
  for (double x : v) l1 += std::abs(x);
  if (l1 == 0.0) return p;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i] != 0.0) p[i] = std::min(1.0, budget * std::abs(v[i]) / l1);
  return p;
}

SparseVector sparsified_k(std::span<const double> v, std::size_t k, RngStream& rng,
                          SparsifiedRule rule) {
  const std::vector<double> p = selection_probabilities(v, k, rule);
  SparseVector h{v.size(), {}, {}};
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (rng.uniform() < p[i]) {
      h.indices.push_back(static_cast<std::uint32_t>(i));
      h.values.push_back(p[i] == 1.0 ? v[i] : v[i] / p[i]);
    }
  }
  return h;
}

CompressorConstants compressor_constants(std::span<const double> v, const CompressorSpec& spec) {
  CompressorConstants c;
  if (linf_norm(v) == 0.0) return c;
  switch (spec.kind) {
    case CompressorKind::Identity:
      break;
    case CompressorKind::TopK:
      c.alpha = contraction_alpha(v, spec.k);
      break;
    case CompressorKind::SparsifiedK: {
      const auto p = selection_probabilities(v, spec.k, spec.rule);
      double p_min = 1.0;
      for (double pj : p)
        if (pj > 0.0) p_min = std::min(p_min, pj);
      c.q2 = 1.0 / p_min - 1.0;
      c.q_inf = std::max(c.q2, 1.0);
      break;
    }
  }
  return c;
}

SparseVector compress(std::span<const double> v, const CompressorSpec& spec, RngStream& rng) {
  switch (spec.kind) {
    case CompressorKind::Identity: return SparseVector::full(v);
    case CompressorKind::TopK: return top_k(v, spec.k);
    case CompressorKind::SparsifiedK: return sparsified_k(v, spec.k, rng, spec.rule);
  }
  throw Error(ErrorCode::ConfigError, "unknown compressor kind");
}

SparseVector direct_compress(std::span<const double> delta, const CompressorSpec& spec,
                             RngStream& rng) {
  return compress(delta, spec, rng);
}

SparseVector ef_compress(EfState& state, std::span<const double> delta, const CompressorSpec& spec,
                         RngStream& rng, CompressorConstants* constants) {
  if (delta.size() != state.error_.size())
    throw Error(ErrorCode::ShapeMismatch, "ef_compress: delta and error memory differ in size");
  const auto& k = kernels::active();
  state.scratch_.resize(delta.size());
  k.add(delta, state.error_, state.scratch_);
  SparseVector h = compress(state.scratch_, spec, rng);
  if (constants) *constants = compressor_constants(state.scratch_, spec);
  std::swap(state.error_, state.scratch_);
  for (std::size_t j = 0; j < h.indices.size(); ++j) state.error_[h.indices[j]] -= h.values[j];
  return h;
}

unsigned index_bits(std::size_t dimension) noexcept {
  return dimension <= 1 ? 0u : static_cast<unsigned>(std::bit_width(dimension - 1));
}

std::vector<std::uint8_t> encode_payload(const SparseVector& h) {
  const unsigned ib = index_bits(h.dimension);
  const std::size_t total_bits = h.entries() * (ib + 32);
  std::vector<std::uint8_t> out((total_bits + 7) / 8, 0);
  std::size_t pos = 0;
  auto put = [&](std::uint64_t value, unsigned bits) {
    for (unsigned b = 0; b < bits; ++b, ++pos)
      if ((value >> b) & 1u) out[pos / 8] |= static_cast<std::uint8_t>(1u << (pos % 8));
  };
  for (std::size_t j = 0; j < h.entries(); ++j) {
    put(h.indices[j], ib);
    put(std::bit_cast<std::uint32_t>(static_cast<float>(h.values[j])), 32);
  }
  return out;
}

SparseVector decode_payload(std::span<const std::uint8_t> bytes, std::size_t dimension,
                            std::size_t entries) {
  const unsigned ib = index_bits(dimension);
  if (bytes.size() * 8 < entries * (ib + 32))
    throw Error(ErrorCode::DimensionMismatch, "payload shorter than its entry count");
  std::size_t pos = 0;
  auto get = [&](unsigned bits) {
    std::uint64_t value = 0;
    for (unsigned b = 0; b < bits; ++b, ++pos)
      if ((bytes[pos / 8] >> (pos % 8)) & 1u) value |= std::uint64_t{1} << b;
    return value;
  };
  SparseVector h{dimension, {}, {}};
  for (std::size_t j = 0; j < entries; ++j) {
    const auto index = static_cast<std::uint32_t>(get(ib));
    if (index >= dimension || (!h.indices.empty() && index <= h.indices.back()))
      throw Error(ErrorCode::IndexOutOfRange, "payload indices must increase and stay below d");
    h.indices.push_back(index);
    h.values.push_back(std::bit_cast<float>(static_cast<std::uint32_t>(get(32))));
  }
  return h;
}

}  // namespace fedq
