#include "fedq/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace fedq {

TabularMDP::TabularMDP(std::size_t n_states, std::size_t n_actions,
                       std::vector<std::vector<Successor>> successors, QTable reward_mean,
                       double gamma, NoiseSpec noise, double r_max)
    : n_states_(n_states),
      n_actions_(n_actions),
      reward_mean_(std::move(reward_mean)),
      gamma_(gamma),
      noise_(noise),
      r_max_(r_max) {
  if (n_states == 0 || n_actions == 0) throw Error(ErrorCode::InvalidMdp, "empty state or action set");
  if (!(gamma > 0.0 && gamma < 1.0)) throw Error(ErrorCode::InvalidGamma, "gamma must lie in (0,1)");
  if (!(noise.std >= 0.0) || !(noise.clip >= 0.0))
    throw Error(ErrorCode::InvalidMdp, "noise std and clip must be non-negative");
  if (!(r_max > 0.0)) throw Error(ErrorCode::InvalidMdp, "r_max must be positive");
  if (successors.size() != n_pairs())
    throw Error(ErrorCode::ShapeMismatch, "one successor list per state-action pair");
  if (reward_mean_.n_states() != n_states || reward_mean_.n_actions() != n_actions)
    throw Error(ErrorCode::ShapeMismatch, "reward table shape");

  offsets_.reserve(n_pairs() + 1);
  offsets_.push_back(0);
  bool deterministic = true;
  for (std::size_t i = 0; i < n_pairs(); ++i) {
    const auto& row = successors[i];
    if (row.empty()) throw Error(ErrorCode::InvalidMdp, "empty transition row");
    double total = 0.0;
    for (const Successor& e : row) {
      if (e.state >= n_states) throw Error(ErrorCode::InvalidMdp, "successor out of range");
      if (!(e.prob >= 0.0)) throw Error(ErrorCode::InvalidMdp, "negative transition probability");
      total += e.prob;
      entries_.push_back(e);
      cumulative_.push_back(total);
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw Error(ErrorCode::InvalidMdp, "transition row does not sum to 1");
    cumulative_.back() = 1.0;
    offsets_.push_back(entries_.size());
    if (row.size() != 1) deterministic = false;
  }
  for (double r : reward_mean_.flat()) {
    if (!std::isfinite(r) || std::abs(r) > r_max)
      throw Error(ErrorCode::InvalidMdp, "reward mean exceeds r_max");
  }
  if (deterministic) {
    det_next_.reserve(n_pairs());
    for (const Successor& e : entries_) det_next_.push_back(static_cast<std::int32_t>(e.state));
  }
}

TabularMDP TabularMDP::from_dense(std::size_t n_states, std::size_t n_actions,
                                  std::span<const double> probs, QTable reward_mean, double gamma,
                                  NoiseSpec noise, double r_max) {
  if (probs.size() != n_states * n_actions * n_states)
    throw Error(ErrorCode::ShapeMismatch, "dense kernel must be |S| x |A| x |S|");
  std::vector<std::vector<Successor>> rows(n_states * n_actions);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t s2 = 0; s2 < n_states; ++s2) {
      const double p = probs[i * n_states + s2];
      if (p < 0.0) throw Error(ErrorCode::InvalidMdp, "negative transition probability");
      if (p > 0.0) rows[i].push_back({s2, p});
    }
  }
  return TabularMDP(n_states, n_actions, std::move(rows), std::move(reward_mean), gamma, noise,
                    r_max);
}

std::span<const Successor> TabularMDP::successors(StateId s, ActionId a) const {
  check_pair(*this, s, a);
  const std::size_t i = s * n_actions_ + a;
  return std::span<const Successor>(entries_).subspan(offsets_[i], offsets_[i + 1] - offsets_[i]);
}

TabularMDP TabularMDP::noiseless() const {
  TabularMDP copy = *this;
  copy.noise_ = NoiseSpec{};
  return copy;
}

GridSpec parse_map(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = end + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty() || lines.front().empty()) throw Error(ErrorCode::EmptyMap, "map has no cells");

  GridSpec grid;
  grid.rows = lines.size();
  grid.cols = lines.front().size();
  grid.cells.reserve(grid.rows * grid.cols);
  std::size_t goals = 0;
  for (std::size_t r = 0; r < lines.size(); ++r) {
    for (char c : lines[r]) {
      switch (c) {
        case '.': grid.cells.push_back(Cell::Empty); break;
        case '#': grid.cells.push_back(Cell::Wall); break;
        case 'G': grid.cells.push_back(Cell::Goal); ++goals; break;
        default:
          throw Error(ErrorCode::UnknownChar,
                      "unexpected character '" + std::string(1, c) + "' in row " + std::to_string(r));
      }
    }
    if (lines[r].size() != grid.cols)
      throw Error(ErrorCode::RaggedRows, "row " + std::to_string(r) + " has length " +
                                             std::to_string(lines[r].size()) + ", expected " +
                                             std::to_string(grid.cols));
  }
  if (goals != 1) throw Error(ErrorCode::GoalCountError, std::to_string(goals) + " goal cells");

  for (std::size_t i = 0; i < grid.cells.size(); ++i) {
    if (grid.cells[i] == Cell::Wall) continue;
    if (grid.cells[i] == Cell::Goal) grid.goal_index = grid.state_cell.size();
    grid.state_cell.push_back(i);
  }
  return grid;
}

GridSpec load_map(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open map file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_map(buf.str());
}

TabularMDP build_gridworld(const GridSpec& grid, NoiseSpec noise, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw Error(ErrorCode::InvalidGamma, "gamma must lie in (0,1)");
  const std::size_t n = grid.n_states();
  std::vector<std::size_t> state_of(grid.cells.size(), n);
  for (std::size_t s = 0; s < n; ++s) state_of[grid.state_cell[s]] = s;

  std::vector<std::vector<Successor>> rows(n * kGridActions);
  QTable reward(n, kGridActions);
  constexpr int dr[kGridActions] = {-1, 1, 0, 0};
  constexpr int dc[kGridActions] = {0, 0, -1, 1};
  for (std::size_t s = 0; s < n; ++s) {
    const auto r = static_cast<long>(grid.state_cell[s] / grid.cols);
    const auto c = static_cast<long>(grid.state_cell[s] % grid.cols);
    for (std::size_t a = 0; a < kGridActions; ++a) {
      auto& row = rows[s * kGridActions + a];
      if (s == grid.goal_index) {
        row.push_back({s, 1.0});
        continue;
      }
      const long nr = r + dr[a];
      const long nc = c + dc[a];
      const bool inside = nr >= 0 && nc >= 0 && nr < static_cast<long>(grid.rows) &&
                          nc < static_cast<long>(grid.cols);
      const std::size_t cell = inside ? static_cast<std::size_t>(nr) * grid.cols + static_cast<std::size_t>(nc) : 0;
      if (!inside || grid.cells[cell] == Cell::Wall) {
        row.push_back({s, 1.0});
        reward(s, a) = -1.0;
      } else {
        const StateId next = state_of[cell];
        row.push_back({next, 1.0});
        reward(s, a) = next == grid.goal_index ? 1.0 : 0.0;
      }
    }
  }
  return TabularMDP(n, kGridActions, std::move(rows), std::move(reward), gamma, noise,
                    1.0 + noise.clip);
}

void check_pair(const TabularMDP& mdp, StateId s, ActionId a) {
  if (s >= mdp.n_states() || a >= mdp.n_actions())
    throw Error(ErrorCode::IndexOutOfRange, "state-action (" + std::to_string(s) + ", " +
                                                std::to_string(a) + ") outside the MDP");
}

StateId sample_next_state(const TabularMDP& mdp, StateId s, ActionId a, RngStream& rng) {
  check_pair(mdp, s, a);
  const std::size_t i = s * mdp.n_actions_ + a;
  const double u = rng.uniform();
  const std::size_t lo = mdp.offsets_[i];
  const std::size_t hi = mdp.offsets_[i + 1];
  for (std::size_t j = lo; j + 1 < hi; ++j)
    if (u < mdp.cumulative_[j]) return mdp.entries_[j].state;
  return mdp.entries_[hi - 1].state;
}

double clip_noise(double raw, double clip) noexcept { return std::clamp(raw, -clip, clip); }

double sample_reward(const TabularMDP& mdp, StateId s, ActionId a, RngStream& rng) {
  check_pair(mdp, s, a);
  const double mean = mdp.reward_mean()(s, a);
  if (mdp.noise().noiseless()) return mean;
  return mean + clip_noise(mdp.noise().std * rng.gaussian(), mdp.noise().clip);
}

void synchronous_sample_into(const TabularMDP& mdp, RngStream& rng, SampleTables& out) {
  const std::size_t d = mdp.n_pairs();
  if (out.next_states.size() != d) out.next_states.resize(d);
  if (!out.rewards.same_shape(mdp.reward_mean()))
    out.rewards = QTable(mdp.n_states(), mdp.n_actions());
  auto rewards = out.rewards.flat();
  const auto means = mdp.reward_mean().flat();
  const bool noisy = !mdp.noise().noiseless();
  const double sigma = mdp.noise().std;
  const double clip = mdp.noise().clip;
  std::size_t i = 0;
  for (StateId s = 0; s < mdp.n_states(); ++s) {
    for (ActionId a = 0; a < mdp.n_actions(); ++a, ++i) {
      out.next_states[i] = static_cast<std::int32_t>(sample_next_state(mdp, s, a, rng));
      rewards[i] = noisy ? means[i] + clip_noise(sigma * rng.gaussian(), clip) : means[i];
    }
  }
}

SampleTables synchronous_sample(const TabularMDP& mdp, RngStream& rng) {
  SampleTables out;
  synchronous_sample_into(mdp, rng, out);
  return out;
}

}  // namespace fedq
