#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedq/qtable.hpp"
#include "fedq/rng.hpp"

namespace fedq {

enum class Cell : std::uint8_t { Empty, Wall, Goal };

/// Parsed map. States are the non-wall cells numbered row-major.
struct GridSpec {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Cell> cells;             // rows * cols, row-major
  std::vector<std::size_t> state_cell;  // state -> cell index
  StateId goal_index = 0;

  std::size_t n_states() const noexcept { return state_cell.size(); }
};

/// Grid actions, in action-index order.
enum class Move : std::uint8_t { Up = 0, Down = 1, Left = 2, Right = 3 };
inline constexpr std::size_t kGridActions = 4;

/// Additive reward noise: clip(N(0, std^2), -clip, +clip).
struct NoiseSpec {
  double std = 0.0;
  double clip = 0.0;

  bool noiseless() const noexcept { return std == 0.0; }
};

/// One (successor, probability) entry of a transition row.
struct Successor {
  StateId state;
  double prob;
};

/// Finite discounted MDP with a generative-model sampler. Immutable after
/// construction; safe to share between workers.
class TabularMDP {
 public:
  /// Sparse construction: successors[s * n_actions + a] lists P(.|s,a).
  TabularMDP(std::size_t n_states, std::size_t n_actions,
             std::vector<std::vector<Successor>> successors, QTable reward_mean, double gamma,
             NoiseSpec noise, double r_max);

  /// Dense construction from a flat |S| x |A| x |S| probability array.
  static TabularMDP from_dense(std::size_t n_states, std::size_t n_actions,
                               std::span<const double> probs, QTable reward_mean, double gamma,
                               NoiseSpec noise, double r_max);

  std::size_t n_states() const noexcept { return n_states_; }
  std::size_t n_actions() const noexcept { return n_actions_; }
  std::size_t n_pairs() const noexcept { return n_states_ * n_actions_; }
  double gamma() const noexcept { return gamma_; }
  double r_max() const noexcept { return r_max_; }
  const NoiseSpec& noise() const noexcept { return noise_; }
  const QTable& reward_mean() const noexcept { return reward_mean_; }

  std::span<const Successor> successors(StateId s, ActionId a) const;

  /// Probability-one successor of every pair, or empty when some pair is random.
  std::span<const std::int32_t> deterministic_next() const noexcept { return det_next_; }

  /// Copy with zero reward noise (the mean-reward MDP whose fixed point is Q*).
  TabularMDP noiseless() const;

 private:
  std::size_t n_states_;
  std::size_t n_actions_;
  std::vector<std::size_t> offsets_;  // n_pairs + 1
  std::vector<Successor> entries_;
  std::vector<double> cumulative_;  // running sums per row, last forced to 1
  std::vector<std::int32_t> det_next_;
  QTable reward_mean_;
  double gamma_;
  NoiseSpec noise_;
  double r_max_;

  friend StateId sample_next_state(const TabularMDP&, StateId, ActionId, RngStream&);
};

/// Parses '.', '#', 'G' rows separated by '\n'. A trailing newline and '\r'
/// line endings are accepted.
GridSpec parse_map(std::string_view text);

/// Reads and parses a map file.
GridSpec load_map(const std::string& path);

/// Deterministic grid dynamics: bumping a wall or the border costs -1 and
/// keeps the state, entering the goal pays +1, the goal is absorbing with 0.
TabularMDP build_gridworld(const GridSpec& grid, NoiseSpec noise, double gamma);

void check_pair(const TabularMDP& mdp, StateId s, ActionId a);

/// Draws s' ~ P(.|s,a). Consumes exactly one uniform from the stream.
StateId sample_next_state(const TabularMDP& mdp, StateId s, ActionId a, RngStream& rng);

/// clip(raw, -clip, +clip).
double clip_noise(double raw, double clip) noexcept;

/// reward_mean(s,a) plus clipped Gaussian noise. Noiseless MDPs return the
/// mean exactly and consume nothing.
double sample_reward(const TabularMDP& mdp, StateId s, ActionId a, RngStream& rng);

/// One generative-model draw for every state-action pair.
struct SampleTables {
  std::vector<std::int32_t> next_states;  // flat, |S||A|
  QTable rewards;
};

SampleTables synchronous_sample(const TabularMDP& mdp, RngStream& rng);

/// Allocation-free variant; `out` is resized on first use.
void synchronous_sample_into(const TabularMDP& mdp, RngStream& rng, SampleTables& out);

}  // namespace fedq
