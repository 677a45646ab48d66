// fedq: command-line driver for the compressed federated Q-learning workbench.
//
//   fedq run <manifest.json> [--threads N]
//   fedq sweep <manifest.json> [--threads N]
//   fedq qstar <map.txt> [--gamma 0.8] [--tol 1e-10] [--out DIR]
//
// FEDQ_OUTPUT_ROOT, when set, is the base for relative output directories.

#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "fedq/harness.hpp"

namespace {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfig = 2,
  kIo = 3,
  kNumerical = 4,
};

int exit_code_for(fedq::ErrorCode code) {
  using fedq::ErrorCode;
  switch (code) {
    case ErrorCode::IoError: return kIo;
    case ErrorCode::NotConverged: return kNumerical;
    default: return kConfig;
  }
}

std::filesystem::path output_root() {
  const char* env = std::getenv("FEDQ_OUTPUT_ROOT");
  return env ? std::filesystem::path(env) : std::filesystem::path();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compressed federated Q-learning workbench"};
  app.require_subcommand(1);

  std::string manifest_path;
  std::size_t threads = 1;
  auto* run = app.add_subcommand("run", "Run one configuration for n_seeds seeds");
  run->add_option("manifest", manifest_path, "Manifest JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--threads", threads, "Worker threads (results do not depend on it)")
      ->check(CLI::PositiveNumber);

  auto* sweep = app.add_subcommand("sweep", "Run every point of the manifest's sweep grid");
  sweep->add_option("manifest", manifest_path, "Manifest JSON")->required()->check(CLI::ExistingFile);
  sweep->add_option("--threads", threads, "Worker threads (results do not depend on it)")
      ->check(CLI::PositiveNumber);

  std::string map_path;
  double gamma = 0.8;
  double tol = 1e-10;
  std::string out_dir = "qstar";
  auto* qstar = app.add_subcommand("qstar", "Solve Q* of a map and write Q and policy CSVs");
  qstar->add_option("map", map_path, "Map file")->required();
  qstar->add_option("--gamma", gamma, "Discount factor");
  qstar->add_option("--tol", tol, "Bellman residual tolerance");
  qstar->add_option("--out", out_dir, "Output directory (cache)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfig;
  }

  try {
    if (*qstar) {
      std::filesystem::path dir = out_dir;
      if (dir.is_relative() && !output_root().empty()) dir = output_root() / dir;
      const auto files = fedq::harness::compute_qstar(map_path, gamma, tol, dir);
      std::cout << (files.reused ? "reused " : "wrote ") << files.q_csv.string() << '\n'
                << (files.reused ? "reused " : "wrote ") << files.policy_csv.string() << '\n';
      return kOk;
    }
    const fedq::harness::RunManifest manifest = fedq::harness::load_manifest(manifest_path);
    fedq::harness::RunOptions options;
    options.threads = threads;
    options.output_root = output_root();
    options.allow_sweep = static_cast<bool>(*sweep);
    const auto outputs = fedq::harness::run_experiment(manifest, options);
    std::cout << "wrote " << outputs.files.size() << " files\n";
    return kOk;
  } catch (const fedq::Error& e) {
    std::cerr << "fedq: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "fedq: " << e.what() << '\n';
    return kFailure;
  }
}
