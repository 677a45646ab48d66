#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fedq/harness.hpp"
#include "json.hpp"
#include "test_util.hpp"

using namespace fedq;
using namespace fedq::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::current_path() / "harness_work" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ErrorCode manifest_error(const std::string& text) {
  try {
    parse_manifest(text);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("accepted manifest " << text);
  return ErrorCode::IoError;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

std::string small_manifest(const fs::path& out, const std::string& extra = "") {
  return R"({"map": ")" + test::map_path("map5x5w.txt") + R"(", "output_dir": ")" + out.string() +
         R"(", "agents": 3, "local_epochs": 2, "rounds": 40, "eta": 0.2, "beta": 0.8,
             "compressor": {"kind": "topk", "k": 5}, "seed": 100)" + extra + "}";
}

}  // namespace

TEST_CASE("manifest defaults and keys") {
  const RunManifest m = parse_manifest(R"({"map": "maps/map5x5.txt"})", "/base");
  CHECK(m.map_path == fs::path("/base/maps/map5x5.txt"));
  CHECK(m.gamma == 0.8);
  CHECK(m.noise.std == 0.5);
  CHECK(m.noise.clip == 0.5);
  CHECK(m.config.fpp == 32);
  CHECK(m.n_seeds == 1);
  CHECK(m.config.compressor.kind == CompressorKind::Identity);
  CHECK(m.sweep.empty());

  const RunManifest full = parse_manifest(R"({
    "name": "x", "map": "/abs/m.txt", "gamma": 0.9, "noise": {"std": 0.0, "clip": 0.0},
    "agents": 7, "local_epochs": 3, "rounds": 11, "eta": 0.25, "beta": 0.5,
    "compressor": {"kind": "sparsified", "k": 4, "rule": "uniform"}, "mode": "direct",
    "seed": 9, "n_seeds": 2, "q0": 1.5, "fpp": 16, "delta": 0.1, "qstar_tol": 1e-8,
    "output_dir": "o", "max_grid_points": 5})");
  CHECK(full.map_path == fs::path("/abs/m.txt"));
  CHECK(full.config.n_agents == 7);
  CHECK(full.config.local_epochs == 3);
  CHECK(full.config.rounds == 11);
  CHECK(full.config.compressor.kind == CompressorKind::SparsifiedK);
  CHECK(full.config.compressor.rule == SparsifiedRule::Uniform);
  CHECK(full.config.mode == UploadMode::Direct);
  CHECK(full.config.q0.value == 1.5);
  CHECK(full.config.fpp == 16);
  CHECK(full.noise.std == 0.0);
  CHECK(full.n_seeds == 2);

  CHECK(manifest_error(R"({"map": "m", "bogus": 1})") == ErrorCode::ConfigError);
  CHECK(manifest_error(R"({"rounds": 3})") == ErrorCode::ConfigError);
  CHECK(manifest_error(R"({"map": "m", "mode": "sideways"})") == ErrorCode::ConfigError);
  CHECK(manifest_error(R"({"map": "m", "compressor": "topk"})") == ErrorCode::ConfigError);
  CHECK(manifest_error(R"({"map": "m", "compressor": {"kind": "topk", "k": 2, "x": 1}})") ==
        ErrorCode::ConfigError);
  CHECK(manifest_error(R"({"map": "m", "rounds": "many"})") == ErrorCode::ConfigError);
  CHECK(manifest_error(R"({"map": "m", "qstar_tol": 0})") == ErrorCode::ConfigError);
  CHECK(manifest_error("not json") == ErrorCode::ConfigError);
}

TEST_CASE("sweep grid") {
  const RunManifest m = parse_manifest(R"({
    "map": "m", "agents": 50, "eta": 0.01, "beta": 0.8, "rounds": 10,
    "sweep": {"local_epochs": [1, 10],
              "compressors": ["none", {"kind": "topk", "k": 50}, {"kind": "topk", "k": 100},
                              {"kind": "sparsified", "k": 50}, {"kind": "sparsified", "k": 100}]}})");
  const auto grid = expand_grid(m);
  REQUIRE(grid.size() == 10);
  CHECK(grid[0].slug == "I50_K1_T10_eta0.01_beta0.8_none_direct");
  CHECK(grid[1].slug == "I50_K1_T10_eta0.01_beta0.8_top50_ef");
  CHECK(grid[3].slug == "I50_K1_T10_eta0.01_beta0.8_sparsified50_direct");
  CHECK(grid[9].config.local_epochs == 10);

  RunManifest capped = m;
  capped.max_grid_points = 9;
  CHECK_THROWS_AS(expand_grid(capped), Error);

  const RunManifest dup = parse_manifest(R"({"map": "m", "sweep": {"eta": [0.1, 0.1]}})");
  CHECK_THROWS_AS(expand_grid(dup), Error);

  const RunManifest single = parse_manifest(R"({"map": "m"})");
  CHECK(expand_grid(single).size() == 1);
}

TEST_CASE("compute_qstar") {
  const fs::path dir = scratch_dir("qstar");
  const fs::path map = dir / "g.txt";
  std::ofstream(map) << "G.\n";
  const QStarFiles first = compute_qstar(map, 0.8, 1e-10, dir / "cache");
  CHECK_FALSE(first.reused);
  const QTable q = read_qtable_csv(first.q_csv);
  CHECK(q(1, static_cast<ActionId>(Move::Left)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(q(1, static_cast<ActionId>(Move::Right)) == doctest::Approx(-0.2).epsilon(1e-12));
  const auto policy = read_csv(first.policy_csv);
  REQUIRE(policy.size() == 3);
  CHECK(policy[0] == std::vector<std::string>{"state", "action"});
  CHECK(policy[2] == std::vector<std::string>{"1", "2"});

  const QStarFiles again = compute_qstar(map, 0.8, 1e-10, dir / "cache");
  CHECK(again.reused);
  CHECK(again.q_csv == first.q_csv);
  CHECK_FALSE(compute_qstar(map, 0.9, 1e-10, dir / "cache").reused);

  CHECK_THROWS_AS(compute_qstar(map, 0.8, 0.0, dir / "cache"), Error);
  CHECK_THROWS_AS(compute_qstar(dir / "missing.txt", 0.8, 1e-10, dir / "cache"), Error);
}

TEST_CASE("run_experiment writes traces, summaries and overlays") {
  const fs::path dir = scratch_dir("run");
  const RunManifest m = parse_manifest(small_manifest(dir / "out", R"(, "n_seeds": 3)"));
  const ExperimentOutputs outs = run_experiment(m, {});
  const std::string stem = "I3_K2_T40_eta0.2_beta0.8_top5_ef";
  for (int s = 100; s < 103; ++s) {
    CHECK(fs::exists(dir / "out" / (stem + "_seed" + std::to_string(s) + ".csv")));
    CHECK(fs::exists(dir / "out" / (stem + "_seed" + std::to_string(s) + "_theory.csv")));
    CHECK(fs::exists(dir / "out" / (stem + "_seed" + std::to_string(s) + "_summary.json")));
  }
  CHECK(fs::exists(dir / "out" / (stem + "_agg.csv")));
  CHECK(outs.files.size() == 3 * 3 + 1 + 2);

  std::vector<std::string> round0;
  for (int s = 100; s < 103; ++s) {
    const auto rows = read_csv(dir / "out" / (stem + "_seed" + std::to_string(s) + ".csv"));
    REQUIRE(rows.size() == 42);
    CHECK(rows[0] == std::vector<std::string>{"round", "rmse", "linf_error", "bits_round",
                                              "bits_cumulative", "payload_entries"});
    round0.push_back(rows[1][1]);
    double prev_bits = -1.0;
    for (std::size_t r = 1; r < rows.size(); ++r) {
      CHECK(std::stod(rows[r][1]) >= 0.0);
      const double bits = std::stod(rows[r][4]);
      CHECK(bits >= prev_bits);
      prev_bits = bits;
    }
    const auto summary = nlohmann::json::parse(
        slurp(dir / "out" / (stem + "_seed" + std::to_string(s) + "_summary.json")));
    CHECK(summary["total_bits_per_agent"].get<double>() == std::stod(rows.back()[4]));
    CHECK(summary["final_rmse"].get<double>() == std::stod(rows.back()[1]));
    CHECK(summary["seed"].get<int>() == s);

    const auto theory = read_csv(dir / "out" / (stem + "_seed" + std::to_string(s) + "_theory.csv"));
    CHECK(theory[0] == std::vector<std::string>{"round", "empirical_linf", "theory_bound"});
    CHECK(theory.size() == 42);
  }
  CHECK(round0[0] == round0[1]);
  CHECK(round0[1] == round0[2]);
}

TEST_CASE("re-running and thread count give byte-identical traces") {
  const fs::path dir = scratch_dir("determinism");
  const std::string sweep = R"(, "n_seeds": 2, "sweep": {"compressors": [
      "none", {"kind": "topk", "k": 5}, {"kind": "sparsified", "k": 5}]})";
  RunManifest a = parse_manifest(small_manifest(dir / "a", sweep));
  RunManifest b = parse_manifest(small_manifest(dir / "b", sweep));
  run_experiment(a, {1, {}, true});
  run_experiment(b, {4, {}, true});
  std::size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(dir / "a")) {
    const auto name = entry.path().filename().string();
    if (entry.path().extension() != ".csv") continue;
    CHECK(slurp(entry.path()) == slurp(dir / "b" / name));
    ++compared;
  }
  CHECK(compared == 3 * 2 * 2 + 3);

  const std::string before = slurp(dir / "a" / "I3_K2_T40_eta0.2_beta0.8_none_direct_seed100.csv");
  run_experiment(a, {2, {}, true});
  CHECK(slurp(dir / "a" / "I3_K2_T40_eta0.2_beta0.8_none_direct_seed100.csv") == before);

  RunOptions single_threads{8, {}, true};
  RunManifest one = parse_manifest(small_manifest(dir / "c", ""));
  RunManifest one_b = parse_manifest(small_manifest(dir / "d", ""));
  run_experiment(one, {1, {}, false});
  run_experiment(one_b, single_threads);
  CHECK(slurp(dir / "c" / "I3_K2_T40_eta0.2_beta0.8_top5_ef_seed100.csv") ==
        slurp(dir / "d" / "I3_K2_T40_eta0.2_beta0.8_top5_ef_seed100.csv"));
}

TEST_CASE("failures leave no outputs") {
  const fs::path dir = scratch_dir("failures");
  RunManifest missing = parse_manifest(small_manifest(dir / "out"));
  missing.map_path = dir / "nope.txt";
  CHECK_THROWS_AS(run_experiment(missing, {}), Error);
  CHECK_FALSE(fs::exists(dir / "out"));

  RunManifest bad = parse_manifest(small_manifest(dir / "out2", R"(, "mode": "direct")"));
  CHECK_THROWS_AS(run_experiment(bad, {}), Error);
  CHECK_FALSE(fs::exists(dir / "out2"));

  RunManifest sweep = parse_manifest(small_manifest(dir / "out3", R"(, "sweep": {"eta": [0.1, 0.2]})"));
  CHECK_THROWS_AS(run_experiment(sweep, {1, {}, false}), Error);
  CHECK_FALSE(fs::exists(dir / "out3"));
}

TEST_CASE("output root resolves relative directories") {
  const fs::path dir = scratch_dir("root");
  RunManifest m = parse_manifest(small_manifest("rel"));
  run_experiment(m, {1, dir, true});
  CHECK(fs::exists(dir / "rel" / "I3_K2_T40_eta0.2_beta0.8_top5_ef_seed100.csv"));
}

TEST_CASE("theory overlay") {
  const TabularMDP m = test::bundled_map("map5x5.txt", 0.8, {0.5, 0.5});
  const QTable q_star = value_iteration(m.noiseless(), 1e-10, 10000).q;
  ExperimentConfig c;
  c.n_agents = 5;
  c.rounds = 60;
  c.eta = 0.3;
  c.beta = 0.8;

  SUBCASE("ablation pairings have no bound") {
    c.compressor = {CompressorKind::TopK, 5};
    c.mode = UploadMode::Direct;
    c.allow_unpaired = true;
    const RunResult r = run_compfedrl(c, m, q_star);
    for (double x : theory_overlay(c, m, r.trace, 0.05)) CHECK(std::isnan(x));
  }

  SUBCASE("bounds hold as a ceiling over 40 seeds") {
    for (CompressorSpec spec : {CompressorSpec{}, CompressorSpec{CompressorKind::TopK, 10},
                                CompressorSpec{CompressorKind::SparsifiedK, 10}}) {
      int held = 0;
      for (std::uint64_t seed = 0; seed < 40; ++seed) {
        c.compressor = spec;
        c.master_seed = seed;
        const RunResult r = run_compfedrl(c, m, q_star);
        const auto bound = theory_overlay(c, m, r.trace, 0.05);
        CHECK(bound[0] == r.trace[0].linf_error);
        held += r.trace.back().linf_error <= bound.back();
      }
      CHECK(held >= 38);
    }
  }
}
