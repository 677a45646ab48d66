#pragma once

// Compressed federated Q-learning with a generative model.
//
// Each round t the server broadcasts Qbar_t; every agent runs K synchronous
// Q-learning epochs from it, uploads a compressed version of its progress
// Q_{t,K} - Qbar_t (optionally corrected by an error memory), and the server
// moves Qbar by beta times the average upload.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "fedq/compression.hpp"
#include "fedq/mdp.hpp"
#include "fedq/qtable.hpp"

namespace fedq {

enum class UploadMode {
  Auto,           // error feedback for biased operators, direct otherwise
  Direct,
  ErrorFeedback,
};

struct InitialQ {
  enum class Kind { Zeros, Constant } kind = Kind::Zeros;
  double value = 0.0;

  static InitialQ zeros() { return {}; }
  static InitialQ constant(double c) { return {Kind::Constant, c}; }
};

struct ExperimentConfig {
  std::size_t n_agents = 1;
  std::size_t local_epochs = 1;
  std::size_t rounds = 1;
  double eta = 0.1;
  double beta = 1.0;
  CompressorSpec compressor;
  UploadMode mode = UploadMode::Auto;
  /// Permits direct Top-K or error-feedback Sparsified-K (ablations).
  bool allow_unpaired = false;
  std::uint64_t master_seed = 0;
  InitialQ q0;
  unsigned fpp = 32;
  /// Threads for the per-round agent loop. Results do not depend on it.
  std::size_t workers = 1;

  /// Mode after resolving Auto.
  UploadMode effective_mode() const noexcept;

  /// Throws ConfigError / ParamOutOfRange / BudgetOutOfRange.
  void validate(const TabularMDP& mdp) const;
};

struct RoundMetrics {
  std::size_t round = 0;
  double rmse = 0.0;
  double linf_error = 0.0;          // ||Qbar_t - Q*||_inf
  double bits_round = 0.0;          // mean over agents
  double bits_cumulative = 0.0;     // mean over agents
  double payload_entries = 0.0;     // mean over agents
  std::uint64_t total_bits_round = 0;     // summed over agents
  std::uint64_t total_entries_round = 0;  // summed over agents
  /// Smallest Top-K contraction constant among this round's uploads (1 for
  /// other operators); 0 flags a vector outside the contraction hypothesis.
  double alpha_min = 1.0;
  /// Largest Sparsified-K constants among this round's uploads.
  double q2_max = 0.0;
  double q_inf_max = 0.0;
};

struct RunResult {
  std::vector<RoundMetrics> trace;  // rounds 0..T, row 0 is the initial table
  QTable final_q;
};

/// Called with (t, Qbar_t) for t = 0..T.
using RoundObserver = std::function<void(std::size_t, const QTable&)>;

/// Eq. (6)-style synchronous update of every entry from one fresh sample
/// table: Q' = (1 - eta) Q + eta * (r + gamma * max_a' Q(s', a')).
QTable local_epoch(const QTable& q, const TabularMDP& mdp, double eta, RngStream& rng);

/// K local epochs from Qbar with the stream of (agent, round, epoch k).
QTable run_local_phase(const QTable& q_bar, std::size_t local_epochs, const TabularMDP& mdp,
                       double eta, std::uint64_t master_seed, std::size_t agent,
                       std::size_t round);

/// Qbar + (beta / I) * sum_i densify(h_i), summed in list order.
QTable aggregate(const QTable& q_bar, const std::vector<SparseVector>& uploads, double beta);

std::size_t payload_entries(const SparseVector& h) noexcept;

QTable initial_table(const ExperimentConfig& config, const TabularMDP& mdp);

/// Runs all T rounds. q_star is the oracle fixed point of the same MDP.
RunResult run_compfedrl(const ExperimentConfig& config, const TabularMDP& mdp,
                        const QTable& q_star, const RoundObserver& observer = {});

}  // namespace fedq
