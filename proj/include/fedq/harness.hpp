#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fedq/bellman.hpp"
#include "fedq/engine.hpp"
#include "fedq/mdp.hpp"

namespace fedq::harness {

/// Optional lists; each non-empty axis multiplies the grid.
struct SweepAxes {
  std::vector<double> eta;
  std::vector<double> beta;
  std::vector<std::size_t> n_agents;
  std::vector<std::size_t> local_epochs;
  std::vector<CompressorSpec> compressors;

  bool empty() const noexcept {
    return eta.empty() && beta.empty() && n_agents.empty() && local_epochs.empty() &&
           compressors.empty();
  }
};

struct RunManifest {
  std::string name = "run";
  ExperimentConfig config;
  std::filesystem::path map_path;
  double gamma = 0.8;
  NoiseSpec noise{0.5, 0.5};
  std::filesystem::path output_dir = "out";
  std::size_t n_seeds = 1;
  SweepAxes sweep;
  std::size_t max_grid_points = 1000;
  double qstar_tol = 1e-10;
  double delta = 0.05;
};

/// Parses manifest JSON. Relative paths resolve against `base_dir`.
RunManifest parse_manifest(std::string_view json_text,
                           const std::filesystem::path& base_dir = {});

RunManifest load_manifest(const std::filesystem::path& path);

struct GridPoint {
  ExperimentConfig config;
  std::string slug;
};

/// Cartesian product of the sweep axes (a single point without axes), in a
/// fixed order. Throws ConfigError above max_grid_points.
std::vector<GridPoint> expand_grid(const RunManifest& manifest);

/// File-name stem naming every Algorithm input that can vary in a sweep.
std::string config_slug(const ExperimentConfig& config);

std::string compressor_name(const CompressorSpec& spec);

struct RunOptions {
  std::size_t threads = 1;
  /// Base for a relative output_dir; empty means the working directory.
  std::filesystem::path output_root;
  bool allow_sweep = true;
};

/// Written files, in creation order.
struct ExperimentOutputs {
  std::vector<std::filesystem::path> files;
};

/// Runs every grid point and seed and writes, per run, the trace CSV, the
/// summary JSON and the theory-overlay CSV, plus one seed-aggregate CSV per
/// grid point. On failure every file this call created is removed.
ExperimentOutputs run_experiment(const RunManifest& manifest, const RunOptions& options);

/// Q* of the mean-reward grid world, cached under `cache_dir` by
/// (map contents, gamma, tol). Writes <stem>_q.csv and <stem>_policy.csv and
/// returns the Q-table path.
struct QStarFiles {
  std::filesystem::path q_csv;
  std::filesystem::path policy_csv;
  bool reused = false;
};

QStarFiles compute_qstar(const std::filesystem::path& map_path, double gamma, double tol,
                         const std::filesystem::path& cache_dir);

/// Reads a "state,action,q" CSV.
QTable read_qtable_csv(const std::filesystem::path& path);

void write_trace_csv(std::ostream& out, const std::vector<RoundMetrics>& trace);

/// Theory bound matching the run's upload mode, NaN where neither bound applies.
std::vector<double> theory_overlay(const ExperimentConfig& config, const TabularMDP& mdp,
                                   const std::vector<RoundMetrics>& trace, double delta);

}  // namespace fedq::harness
