#include <cmath>
#include <random>

#include "doctest.h"
#include "fedq/mdp.hpp"
#include "test_util.hpp"

using namespace fedq;

namespace {

ErrorCode parse_error(const std::string& text) {
  try {
    parse_map(text);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("parse_map accepted " << text);
  return ErrorCode::IoError;
}

// Two states; from state 0 every action moves to 1 with probability 0.7.
TabularMDP two_state(NoiseSpec noise = {}) {
  std::vector<std::vector<Successor>> succ = {
      {{0, 0.3}, {1, 0.7}},
      {{1, 1.0}},
  };
  QTable r(2, 1);
  r(0, 0) = 0.25;
  r(1, 0) = -0.5;
  return TabularMDP(2, 1, std::move(succ), std::move(r), 0.9, noise, 1.0 + noise.clip);
}

}  // namespace

TEST_CASE("parse_map assigns row-major states over non-wall cells") {
  const GridSpec g = parse_map("G.");
  CHECK(g.rows == 1);
  CHECK(g.cols == 2);
  CHECK(g.n_states() == 2);
  CHECK(g.goal_index == 0);

  const GridSpec w = parse_map("G#\n..");
  CHECK(w.n_states() == 3);
  CHECK(w.state_cell == std::vector<std::size_t>{0, 2, 3});
  CHECK(w.cells[1] == Cell::Wall);

  const GridSpec crlf = parse_map(".#\r\n.G\r\n");
  CHECK(crlf.rows == 2);
  CHECK(crlf.n_states() == 3);
  CHECK(crlf.goal_index == 2);
}

TEST_CASE("parse_map errors") {
  CHECK(parse_error("..\n..") == ErrorCode::GoalCountError);
  CHECK(parse_error("G.\nG.") == ErrorCode::GoalCountError);
  CHECK(parse_error("G.\n...") == ErrorCode::RaggedRows);
  CHECK(parse_error("G.x") == ErrorCode::UnknownChar);
  CHECK(parse_error("") == ErrorCode::EmptyMap);
}

TEST_CASE("load_map reports missing files") {
  try {
    load_map(test::map_path("does_not_exist.txt"));
    FAIL("expected IoError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IoError);
  }
}

TEST_CASE("grid dynamics on G.") {
  const TabularMDP m = test::grid_mdp("G.");
  const auto left = static_cast<ActionId>(Move::Left);
  const auto right = static_cast<ActionId>(Move::Right);
  REQUIRE(m.successors(1, left).size() == 1);
  CHECK(m.successors(1, left)[0].state == 0);
  CHECK(m.reward_mean()(1, left) == 1.0);
  CHECK(m.successors(1, right)[0].state == 1);
  CHECK(m.reward_mean()(1, right) == -1.0);
  for (ActionId a = 0; a < kGridActions; ++a) {
    CHECK(m.successors(0, a)[0].state == 0);
    CHECK(m.reward_mean()(0, a) == 0.0);
  }
  CHECK(m.r_max() == 1.0);
  CHECK(test::grid_mdp("G.", 0.8, {0.5, 0.5}).r_max() == 1.5);
}

TEST_CASE("walls block movement") {
  // . # .
  // . G .
  const TabularMDP m = test::grid_mdp(".#.\n.G.");
  const auto right = static_cast<ActionId>(Move::Right);
  const auto down = static_cast<ActionId>(Move::Down);
  CHECK(m.n_states() == 5);
  CHECK(m.successors(0, right)[0].state == 0);
  CHECK(m.reward_mean()(0, right) == -1.0);
  CHECK(m.successors(0, down)[0].state == 2);
  CHECK(m.reward_mean()(0, down) == 0.0);
  CHECK(m.successors(1, down)[0].state == 4);
  CHECK(m.reward_mean()(2, right) == 1.0);
}

TEST_CASE("invalid gamma and malformed kernels are rejected") {
  CHECK_THROWS_AS(test::grid_mdp("G.", 1.0), Error);
  CHECK_THROWS_AS(test::grid_mdp("G.", 0.0), Error);
  std::vector<std::vector<Successor>> bad = {{{0, 0.5}}};
  CHECK_THROWS_AS(TabularMDP(1, 1, bad, QTable(1, 1), 0.5, {}, 1.0), Error);
  std::vector<std::vector<Successor>> ok = {{{0, 1.0}}};
  CHECK_THROWS_AS(TabularMDP(1, 1, ok, QTable(1, 1, 2.0), 0.5, {}, 1.0), Error);
  CHECK_THROWS_AS(TabularMDP(1, 1, ok, QTable(1, 1), 0.5, {-1.0, 0.0}, 1.0), Error);
}

TEST_CASE("bundled maps: state count equals non-wall cells, rows are stochastic") {
  for (const char* name :
       {"map5x5.txt", "map5x5w.txt", "map6x6w.txt", "map11x11.txt", "map17x17w.txt"}) {
    CAPTURE(name);
    const GridSpec g = load_map(test::map_path(name));
    std::size_t open = 0;
    for (Cell c : g.cells) open += c != Cell::Wall;
    CHECK(g.n_states() == open);
    const TabularMDP m = build_gridworld(g, {0.5, 0.5}, 0.8);
    for (StateId s = 0; s < m.n_states(); ++s) {
      for (ActionId a = 0; a < m.n_actions(); ++a) {
        double total = 0.0;
        for (const Successor& e : m.successors(s, a)) {
          CHECK(e.prob >= 0.0);
          total += e.prob;
        }
        CHECK(std::abs(total - 1.0) <= 1e-12);
        CHECK(std::abs(m.reward_mean()(s, a)) <= m.r_max());
      }
    }
  }
}

TEST_CASE("sample_next_state") {
  const TabularMDP g = test::grid_mdp("G.");
  RngStream rng(1);
  for (int i = 0; i < 20; ++i) CHECK(sample_next_state(g, 1, 2, rng) == 0);
  CHECK_THROWS_AS(sample_next_state(g, 1, 4, rng), Error);
  CHECK_THROWS_AS(sample_next_state(g, 2, 0, rng), Error);

  SUBCASE("consumes exactly one uniform") {
    RngStream a(99), b(99);
    sample_next_state(two_state(), 0, 0, a);
    b.uniform();
    CHECK(a.uniform() == b.uniform());
  }

  SUBCASE("empirical frequency matches the kernel") {
    const TabularMDP m = two_state();
    RngStream r(2024);
    const int n = 100000;
    int ones = 0;
    for (int i = 0; i < n; ++i) ones += sample_next_state(m, 0, 0, r) == 1;
    const double freq = static_cast<double>(ones) / n;
    CHECK(std::abs(freq - 0.7) <= 3.0 * std::sqrt(0.21 / n));
  }
}

TEST_CASE("sample_reward") {
  const TabularMDP quiet = two_state();
  RngStream a(3), b(3);
  CHECK(sample_reward(quiet, 0, 0, a) == 0.25);
  CHECK(a.uniform() == b.uniform());  // nothing consumed

  CHECK(clip_noise(0.9, 0.5) == 0.5);
  CHECK(clip_noise(-0.9, 0.5) == -0.5);
  CHECK(clip_noise(0.2, 0.5) == 0.2);

  const NoiseSpec noise{0.5, 0.5};
  const TabularMDP noisy = two_state(noise);
  RngStream r(11);
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = sample_reward(noisy, 1, 0, r);
    CHECK_FALSE((x < -1.0 || x > 0.0));
    sum += x;
  }
  CHECK(std::abs(sum / n - (-0.5)) <= 3.0 * noise.std / std::sqrt(double(n)));
  CHECK_THROWS_AS(sample_reward(noisy, 0, 1, r), Error);
}

TEST_CASE("synchronous_sample") {
  const TabularMDP g = test::bundled_map("map5x5w.txt");
  RngStream rng(5);
  const SampleTables t = synchronous_sample(g, rng);
  CHECK(t.next_states.size() == g.n_pairs());
  CHECK(t.rewards.n_states() == g.n_states());
  CHECK(t.rewards.n_actions() == g.n_actions());
  CHECK(t.rewards == g.reward_mean());
  const auto det = g.deterministic_next();
  REQUIRE(det.size() == g.n_pairs());
  CHECK(std::equal(det.begin(), det.end(), t.next_states.begin()));

  const TabularMDP noisy = test::bundled_map("map5x5w.txt", 0.8, {0.5, 0.5});
  RngStream a(fedq::derive_stream_key(7, {StreamPurpose::Environment, 2, 3, 4}));
  RngStream b(fedq::derive_stream_key(7, {StreamPurpose::Environment, 2, 3, 4}));
  const SampleTables ta = synchronous_sample(noisy, a);
  const SampleTables tb = synchronous_sample(noisy, b);
  CHECK(ta.next_states == tb.next_states);
  CHECK(ta.rewards == tb.rewards);
  for (std::size_t i = 0; i < noisy.n_pairs(); ++i) {
    const double mean = noisy.reward_mean().flat()[i];
    CHECK(std::abs(ta.rewards.flat()[i] - mean) <= 0.5);
  }

  SampleTables reused;
  RngStream c(fedq::derive_stream_key(7, {StreamPurpose::Environment, 2, 3, 4}));
  synchronous_sample_into(noisy, c, reused);
  CHECK(reused.rewards == ta.rewards);
}

TEST_CASE("stream derivation") {
  const StreamPath p{StreamPurpose::Environment, 1, 2, 3};
  CHECK(derive_stream_key(1, p) == derive_stream_key(1, p));
  CHECK(derive_stream_key(1, p) != derive_stream_key(2, p));
  CHECK(derive_stream_key(1, p) != derive_stream_key(1, {StreamPurpose::Compressor, 1, 2, 3}));
  CHECK(derive_stream_key(1, p) != derive_stream_key(1, {StreamPurpose::Environment, 2, 1, 3}));
  RngStream u(8);
  for (int i = 0; i < 10000; ++i) {
    const double x = u.uniform();
    CHECK_FALSE((x < 0.0 || x >= 1.0));
  }
}

TEST_CASE("agent streams are jointly uniform (chi-square, 2-state MDP)") {
  // P(.|s,a) = [0.5, 0.5]; joint outcome of agents 0 and 1 in each round.
  std::vector<std::vector<Successor>> succ = {{{0, 0.5}, {1, 0.5}}, {{0, 0.5}, {1, 0.5}}};
  const TabularMDP m(2, 1, succ, QTable(2, 1), 0.5, {}, 1.0);
  const std::uint64_t seed = 20240601;
  std::array<int, 4> counts{};
  const int n = 10000;
  for (int t = 0; t < n; ++t) {
    RngStream r0(seed, {StreamPurpose::Environment, 0, static_cast<std::uint64_t>(t), 0});
    RngStream r1(seed, {StreamPurpose::Environment, 1, static_cast<std::uint64_t>(t), 0});
    const auto x = sample_next_state(m, 0, 0, r0);
    const auto y = sample_next_state(m, 0, 0, r1);
    ++counts[2 * x + y];
  }
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - n / 4.0) * (c - n / 4.0) / (n / 4.0);
  CHECK(chi2 < 11.345);  // chi-square(3) at 0.01
}
