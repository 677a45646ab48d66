#include "fedq/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedq/error.hpp"

namespace fedq::analysis {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::ParamOutOfRange, what);
}

void check_common(const BoundParams& p) {
  require(p.beta > 0.0 && p.beta <= 1.0, "beta must lie in (0,1]");
  require(p.eta > 0.0 && p.eta <= 1.0, "eta must lie in (0,1]");
  require(p.gamma > 0.0 && p.gamma < 1.0, "gamma must lie in (0,1)");
  require(p.local_epochs >= 1 && p.rounds >= 1 && p.n_agents >= 1, "K, T, I must be positive");
  require(p.delta > 0.0 && p.delta < 1.0, "delta must lie in (0,1)");
  require(p.n_states >= 1 && p.n_actions >= 1, "state and action counts must be positive");
  require(p.q0_gap >= 0.0, "q0_gap must be non-negative");
  require(p.r_max > 0.0, "r_max must be positive");
}

// (1 - eta)^K and 1 - (1 - eta)^K through log1p/expm1, which stay accurate
// for small eta where 1 - eta rounds.
double decay(double eta, std::size_t local_epochs) {
  return std::exp(static_cast<double>(local_epochs) * std::log1p(-eta));
}

double one_minus_decay(double eta, std::size_t local_epochs) {
  return -std::expm1(static_cast<double>(local_epochs) * std::log1p(-eta));
}

// rho^T = exp(T log(1 - beta (1 - (1 - eta)^K))).
double rho_power(const BoundParams& p) {
  const double step = p.beta * one_minus_decay(p.eta, p.local_epochs);
  return std::exp(static_cast<double>(p.rounds) * std::log1p(-step));
}

}  // namespace

double rho(double beta, double eta, std::size_t local_epochs) {
  require(beta > 0.0 && beta <= 1.0, "beta must lie in (0,1]");
  require(eta > 0.0 && eta <= 1.0, "eta must lie in (0,1]");
  require(local_epochs >= 1, "K must be positive");
  return 1.0 - beta * one_minus_decay(eta, local_epochs);
}

BoundTerms theorem1_terms(const BoundParams& p) {
  check_common(p);
  require(p.q2 >= 0.0 && p.q_inf >= 0.0, "q2 and q_inf must be non-negative");
  const double sa = static_cast<double>(p.n_states) * static_cast<double>(p.n_actions);
  const double T = static_cast<double>(p.rounds);
  const double K = static_cast<double>(p.local_epochs);
  const double I = static_cast<double>(p.n_agents);
  const double omd = one_minus_decay(p.eta, p.local_epochs);
  const double C = (1.0 - p.gamma) * omd;
  const double L = std::log(4.0 * sa * T * K / p.delta);
  const double LT = std::log(4.0 * T / p.delta);

  const double e1 = 4.0 * p.gamma / C * std::sqrt(L) * (1.0 + 1.0 / std::sqrt(p.eta * I) * std::sqrt(L));
  const double e2 =
      1.0 / omd *
      (std::sqrt(16.0 * (4.0 * p.q2 * sa) / ((1.0 - p.gamma) * (1.0 - p.gamma)) * LT) +
       4.0 / 3.0 * (2.0 * p.q_inf * std::sqrt(I) / (1.0 - p.gamma)) * LT);

  BoundTerms t;
  t.transient = rho_power(p) * p.q0_gap;
  t.sampling = p.r_max * std::sqrt(p.eta / I) * e1;
  t.bias = p.r_max * 2.0 * p.gamma / C;
  t.compression = p.r_max * 1.0 / std::sqrt(I) * e2;
  return t;
}

double theorem1_bound(const BoundParams& p) { return theorem1_terms(p).total(); }

BoundTerms theorem2_terms(const BoundParams& p) {
  check_common(p);
  require(p.alpha > 0.0 && p.alpha <= 1.0, "alpha must lie in (0,1]");
  const double sa = static_cast<double>(p.n_states) * static_cast<double>(p.n_actions);
  const double T = static_cast<double>(p.rounds);
  const double K = static_cast<double>(p.local_epochs);
  const double I = static_cast<double>(p.n_agents);
  const double d = decay(p.eta, p.local_epochs);
  const double omd = one_minus_decay(p.eta, p.local_epochs);
  const double C = (1.0 - p.gamma) * omd;
  const double L = std::log(2.0 * sa * T * K / p.delta);
  const double e1 = 1.0 + 1.0 / std::sqrt(p.eta * I) * std::sqrt(L);
  const double D = 1.0 + (1.0 + d) / omd;

  BoundTerms t;
  t.transient = rho_power(p) * p.q0_gap;
  t.sampling = p.r_max * 4.0 / C * std::sqrt(p.eta / I * L) * e1;
  t.bias = p.r_max * 2.0 * p.gamma / C;
  t.compression = p.r_max * 2.0 * p.beta * (1.0 - p.alpha) / (p.alpha * (1.0 - p.gamma)) * D;
  return t;
}

double theorem2_bound(const BoundParams& p) { return theorem2_terms(p).total(); }

std::uint64_t payload_bits(CompressorKind kind, std::size_t dimension, std::size_t entries,
                           BitModel bits) {
  require(bits.fpp >= 1, "fpp must be positive");
  if (kind == CompressorKind::Identity) return std::uint64_t{dimension} * bits.fpp;
  return std::uint64_t{entries} * (index_bits(dimension) + bits.fpp);
}

AlphaTrace estimate_alpha_trace(std::span<const std::vector<double>> trace, std::size_t k) {
  if (trace.empty()) throw Error(ErrorCode::ParamOutOfRange, "estimate_alpha_trace: empty trace");
  AlphaTrace out;
  for (std::size_t t = 0; t < trace.size(); ++t) {
    const auto& v = trace[t];
    const bool zero = std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
    if (zero) {
      out.skipped.push_back(t);
      continue;
    }
    const double a = contraction_alpha(v, k);
    out.alpha.push_back(a);
    out.rounds.push_back(t);
    out.alpha_min = std::min(out.alpha_min, a);
    if (a == 0.0) out.hypothesis_violated = true;
  }
  return out;
}

}  // namespace fedq::analysis
