#include "fedq/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "fedq/analysis.hpp"
#include "fedq/worker_pool.hpp"
#include "json.hpp"

namespace fedq::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::ConfigError, what); }

std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string short_num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

CompressorSpec parse_compressor(const json& j) {
  CompressorSpec spec;
  std::string kind;
  if (j.is_string()) {
    kind = j.get<std::string>();
  } else if (j.is_object()) {
    for (const auto& [key, _] : j.items())
      if (key != "kind" && key != "k" && key != "rule") config_error("unknown compressor key '" + key + "'");
    kind = j.value("kind", std::string("none"));
    spec.k = j.value("k", std::size_t{0});
    const std::string rule = j.value("rule", std::string("l1"));
    if (rule == "l1") spec.rule = SparsifiedRule::L1;
    else if (rule == "uniform") spec.rule = SparsifiedRule::Uniform;
    else config_error("unknown sparsification rule '" + rule + "'");
  } else {
    config_error("compressor must be a string or an object");
  }
  if (kind == "none" || kind == "identity") spec.kind = CompressorKind::Identity;
  else if (kind == "topk") spec.kind = CompressorKind::TopK;
  else if (kind == "sparsified") spec.kind = CompressorKind::SparsifiedK;
  else config_error("unknown compressor kind '" + kind + "'");
  if (spec.kind != CompressorKind::Identity && spec.k == 0) config_error("compressor needs k >= 1");
  return spec;
}

UploadMode parse_mode(const std::string& s) {
  if (s == "auto") return UploadMode::Auto;
  if (s == "direct") return UploadMode::Direct;
  if (s == "error_feedback" || s == "ef") return UploadMode::ErrorFeedback;
  config_error("unknown mode '" + s + "'");
}

std::string mode_name(UploadMode m) {
  switch (m) {
    case UploadMode::Auto: return "auto";
    case UploadMode::Direct: return "direct";
    case UploadMode::ErrorFeedback: return "ef";
  }
  return "?";
}

template <class T>
std::vector<T> list_of(const json& j, const char* key) {
  if (!j.is_array()) config_error(std::string("sweep axis '") + key + "' must be a list");
  return j.get<std::vector<T>>();
}

struct Job {
  std::size_t point;
  std::size_t seed_index;
};

struct RunRecord {
  RunResult result;
  double seconds = 0.0;
};

json summary_json(const GridPoint& point, std::uint64_t seed, const RunResult& r, double seconds,
                  const std::vector<double>& overlay) {
  const RoundMetrics& last = r.trace.back();
  double alpha_min = 1.0;
  double q2_max = 0.0;
  for (const RoundMetrics& m : r.trace) {
    alpha_min = std::min(alpha_min, m.alpha_min);
    q2_max = std::max(q2_max, m.q2_max);
  }
  const ExperimentConfig& c = point.config;
  json j;
  j["slug"] = point.slug;
  j["seed"] = seed;
  j["rounds"] = c.rounds;
  j["final_rmse"] = last.rmse;
  j["final_linf_error"] = last.linf_error;
  j["total_bits_per_agent"] = last.bits_cumulative;
  std::uint64_t all = 0;
  for (const RoundMetrics& m : r.trace) all += m.total_bits_round;
  j["total_bits_all_agents"] = all;
  j["runtime_seconds"] = seconds;
  j["alpha_min"] = alpha_min;
  j["q2_max"] = q2_max;
  j["final_theory_bound"] = overlay.empty() || std::isnan(overlay.back()) ? json(nullptr) : json(overlay.back());
  j["config"] = {{"n_agents", c.n_agents},     {"local_epochs", c.local_epochs},
                 {"eta", c.eta},               {"beta", c.beta},
                 {"compressor", compressor_name(c.compressor)},
                 {"mode", mode_name(c.effective_mode())},
                 {"master_seed", c.master_seed}, {"fpp", c.fpp}};
  return j;
}

class FileTracker {
 public:
  void add(const fs::path& p) {
    std::lock_guard lock(mutex_);
    files_.push_back(p);
  }
  void remove_all() {
    std::error_code ec;
    for (const fs::path& p : files_) fs::remove(p, ec);
  }
  std::vector<fs::path> files() const {
    std::vector<fs::path> sorted = files_;
    std::sort(sorted.begin(), sorted.end());
    return sorted;
  }

 private:
  std::mutex mutex_;
  std::vector<fs::path> files_;
};

void write_text(const fs::path& path, const std::string& text, FileTracker& tracker) {
  tracker.add(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace

std::string compressor_name(const CompressorSpec& spec) {
  switch (spec.kind) {
    case CompressorKind::Identity: return "none";
    case CompressorKind::TopK: return "top" + std::to_string(spec.k);
    case CompressorKind::SparsifiedK:
      return "sparsified" + std::to_string(spec.k) + (spec.rule == SparsifiedRule::Uniform ? "u" : "");
  }
  return "?";
}

std::string config_slug(const ExperimentConfig& c) {
  return "I" + std::to_string(c.n_agents) + "_K" + std::to_string(c.local_epochs) + "_T" +
         std::to_string(c.rounds) + "_eta" + short_num(c.eta) + "_beta" + short_num(c.beta) + "_" +
         compressor_name(c.compressor) + "_" + mode_name(c.effective_mode());
}

RunManifest parse_manifest(std::string_view json_text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    config_error(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) config_error("manifest must be a JSON object");

  static const std::set<std::string> known = {
      "name", "map", "gamma", "noise", "agents", "local_epochs", "rounds", "eta", "beta",
      "compressor", "mode", "allow_unpaired", "seed", "n_seeds", "q0", "fpp", "delta",
      "qstar_tol", "output_dir", "sweep", "max_grid_points"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) config_error("unknown manifest key '" + key + "'");

  RunManifest m;
  try {
    if (!j.contains("map")) config_error("manifest needs a 'map'");
    m.name = j.value("name", m.name);
    m.map_path = j["map"].get<std::string>();
    if (m.map_path.is_relative() && !base_dir.empty()) m.map_path = base_dir / m.map_path;
    m.gamma = j.value("gamma", m.gamma);
    if (j.contains("noise")) {
      const json& n = j["noise"];
      m.noise.std = n.value("std", m.noise.std);
      m.noise.clip = n.value("clip", m.noise.clip);
    }
    ExperimentConfig& c = m.config;
    c.n_agents = j.value("agents", std::size_t{1});
    c.local_epochs = j.value("local_epochs", std::size_t{1});
    c.rounds = j.value("rounds", std::size_t{1000});
    c.eta = j.value("eta", 0.1);
    c.beta = j.value("beta", 0.8);
    if (j.contains("compressor")) c.compressor = parse_compressor(j["compressor"]);
    c.mode = parse_mode(j.value("mode", std::string("auto")));
    c.allow_unpaired = j.value("allow_unpaired", false);
    c.master_seed = j.value("seed", std::uint64_t{0});
    if (j.contains("q0")) c.q0 = InitialQ::constant(j["q0"].get<double>());
    c.fpp = j.value("fpp", 32u);
    m.n_seeds = j.value("n_seeds", std::size_t{1});
    m.delta = j.value("delta", m.delta);
    m.qstar_tol = j.value("qstar_tol", m.qstar_tol);
    m.output_dir = j.value("output_dir", std::string("out"));
    m.max_grid_points = j.value("max_grid_points", m.max_grid_points);
    if (j.contains("sweep")) {
      const json& s = j["sweep"];
      if (!s.is_object()) config_error("'sweep' must be an object");
      for (const auto& [key, value] : s.items()) {
        if (key == "eta") m.sweep.eta = list_of<double>(value, "eta");
        else if (key == "beta") m.sweep.beta = list_of<double>(value, "beta");
        else if (key == "agents") m.sweep.n_agents = list_of<std::size_t>(value, "agents");
        else if (key == "local_epochs") m.sweep.local_epochs = list_of<std::size_t>(value, "local_epochs");
        else if (key == "compressors") {
          if (!value.is_array()) config_error("sweep axis 'compressors' must be a list");
          for (const json& cj : value) m.sweep.compressors.push_back(parse_compressor(cj));
        } else config_error("unknown sweep axis '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    config_error(std::string("bad manifest value: ") + e.what());
  }
  if (m.n_seeds < 1) config_error("n_seeds must be at least 1");
  if (!(m.qstar_tol > 0.0)) config_error("qstar_tol must be positive");
  if (!(m.delta > 0.0 && m.delta < 1.0)) config_error("delta must lie in (0,1)");
  return m;
}

RunManifest load_manifest(const fs::path& path) {
  return parse_manifest(read_file(path), path.parent_path());
}

std::vector<GridPoint> expand_grid(const RunManifest& m) {
  const ExperimentConfig& base = m.config;
  auto or_base = [](const auto& axis, auto value) {
    using T = decltype(value);
    return axis.empty() ? std::vector<T>{value} : std::vector<T>(axis.begin(), axis.end());
  };
  const auto etas = or_base(m.sweep.eta, base.eta);
  const auto betas = or_base(m.sweep.beta, base.beta);
  const auto agents = or_base(m.sweep.n_agents, base.n_agents);
  const auto epochs = or_base(m.sweep.local_epochs, base.local_epochs);
  const auto comps = or_base(m.sweep.compressors, base.compressor);
  const std::size_t total = etas.size() * betas.size() * agents.size() * epochs.size() * comps.size();
  if (total * m.n_seeds > m.max_grid_points)
    config_error("sweep has " + std::to_string(total * m.n_seeds) + " runs, cap is " +
                 std::to_string(m.max_grid_points));

  std::vector<GridPoint> points;
  for (std::size_t ep : epochs)
    for (const CompressorSpec& comp : comps)
      for (std::size_t n : agents)
        for (double eta : etas)
          for (double beta : betas) {
            GridPoint p{base, {}};
            p.config.local_epochs = ep;
            p.config.compressor = comp;
            p.config.n_agents = n;
            p.config.eta = eta;
            p.config.beta = beta;
            p.slug = config_slug(p.config);
            points.push_back(std::move(p));
          }
  std::set<std::string> seen;
  for (const GridPoint& p : points)
    if (!seen.insert(p.slug).second) config_error("duplicate grid point " + p.slug);
  return points;
}

QTable read_qtable_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "state,action,q")
    throw Error(ErrorCode::IoError, path.string() + ": missing 'state,action,q' header");
  struct Row { std::size_t s, a; double q; };
  std::vector<Row> rows;
  std::size_t n_states = 0, n_actions = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Row r{};
    char* end = nullptr;
    const char* p = line.c_str();
    r.s = std::strtoull(p, &end, 10);
    if (*end != ',') throw Error(ErrorCode::IoError, path.string() + ": bad row '" + line + "'");
    r.a = std::strtoull(end + 1, &end, 10);
    if (*end != ',') throw Error(ErrorCode::IoError, path.string() + ": bad row '" + line + "'");
    r.q = std::strtod(end + 1, &end);
    rows.push_back(r);
    n_states = std::max(n_states, r.s + 1);
    n_actions = std::max(n_actions, r.a + 1);
  }
  if (rows.size() != n_states * n_actions)
    throw Error(ErrorCode::IoError, path.string() + ": incomplete Q table");
  QTable q(n_states, n_actions);
  for (const Row& r : rows) q(r.s, r.a) = r.q;
  return q;
}

QStarFiles compute_qstar(const fs::path& map_path, double gamma, double tol,
                         const fs::path& cache_dir) {
  if (!(tol > 0.0)) config_error("tol must be positive");
  if (!(gamma > 0.0 && gamma < 1.0)) throw Error(ErrorCode::InvalidGamma, "gamma must lie in (0,1)");
  const std::string text = read_file(map_path);
  const GridSpec grid = parse_map(text);

  char stem[96];
  std::snprintf(stem, sizeof stem, "qstar_%016llx_g%s_tol%s",
                static_cast<unsigned long long>(fnv1a(text)), short_num(gamma).c_str(),
                short_num(tol).c_str());
  QStarFiles files{cache_dir / (std::string(stem) + "_q.csv"),
                   cache_dir / (std::string(stem) + "_policy.csv"), false};
  std::error_code ec;
  if (fs::exists(files.q_csv, ec) && fs::exists(files.policy_csv, ec)) {
    files.reused = true;
    return files;
  }

  const TabularMDP mdp = build_gridworld(grid, NoiseSpec{}, gamma);
  const double r_max = mdp.r_max();
  // Enough sweeps for a gamma-contraction from 0 to reach tol, plus slack.
  const auto max_iter = static_cast<std::size_t>(
      std::ceil(std::log(tol * (1.0 - gamma) / (2.0 * r_max)) / std::log(gamma))) + 100;
  const ValueIterationResult vi = value_iteration(mdp, tol, max_iter);

  fs::create_directories(cache_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + cache_dir.string());
  // Write-then-rename so concurrent writers never expose a partial file.
  auto publish = [&](const fs::path& target, const std::string& body) {
    static std::atomic<unsigned> counter{0};
    const fs::path tmp = target.string() + ".tmp" + std::to_string(counter++) + "_" +
                         std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
      out << body;
    }
    fs::rename(tmp, target, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot publish " + target.string());
  };
  std::ostringstream q_out, pi_out;
  write_qtable_csv(q_out, vi.q);
  write_policy_csv(pi_out, greedy_policy(vi.q));
  publish(files.policy_csv, pi_out.str());
  publish(files.q_csv, q_out.str());
  return files;
}

void write_trace_csv(std::ostream& out, const std::vector<RoundMetrics>& trace) {
  out << "round,rmse,linf_error,bits_round,bits_cumulative,payload_entries\n";
  for (const RoundMetrics& m : trace)
    out << m.round << ',' << fmt(m.rmse) << ',' << fmt(m.linf_error) << ',' << fmt(m.bits_round)
        << ',' << fmt(m.bits_cumulative) << ',' << fmt(m.payload_entries) << '\n';
}

std::vector<double> theory_overlay(const ExperimentConfig& config, const TabularMDP& mdp,
                                   const std::vector<RoundMetrics>& trace, double delta) {
  std::vector<double> bound(trace.size(), std::numeric_limits<double>::quiet_NaN());
  if (trace.empty()) return bound;
  const CompressorKind kind = config.compressor.kind;
  const bool ef = config.effective_mode() == UploadMode::ErrorFeedback;
  const bool unbiased_direct = !ef && kind != CompressorKind::TopK;
  const bool biased_ef = ef && kind != CompressorKind::SparsifiedK;
  if (!unbiased_direct && !biased_ef) return bound;

  double alpha = 1.0, q2 = 0.0, q_inf = 0.0;
  for (const RoundMetrics& m : trace) {
    alpha = std::min(alpha, m.alpha_min);
    q2 = std::max(q2, m.q2_max);
    q_inf = std::max(q_inf, m.q_inf_max);
  }
  if (biased_ef && alpha <= 0.0) return bound;

  analysis::BoundParams p;
  p.beta = config.beta;
  p.eta = config.eta;
  p.gamma = mdp.gamma();
  p.local_epochs = config.local_epochs;
  p.n_agents = config.n_agents;
  p.delta = delta;
  p.n_states = mdp.n_states();
  p.n_actions = mdp.n_actions();
  p.q2 = q2;
  p.q_inf = q_inf;
  p.alpha = alpha;
  p.q0_gap = trace.front().linf_error;
  p.r_max = mdp.r_max();
  bound[0] = p.q0_gap;
  for (std::size_t t = 1; t < trace.size(); ++t) {
    p.rounds = t;
    bound[t] = unbiased_direct ? analysis::theorem1_bound(p) : analysis::theorem2_bound(p);
  }
  return bound;
}

ExperimentOutputs run_experiment(const RunManifest& manifest, const RunOptions& options) {
  if (!options.allow_sweep && !manifest.sweep.empty())
    config_error("manifest has sweep axes; use the sweep command");
  if (options.threads < 1) config_error("threads must be at least 1");

  // Everything that can fail on bad input happens before the first write.
  const GridSpec grid = load_map(manifest.map_path.string());
  const TabularMDP mdp = build_gridworld(grid, manifest.noise, manifest.gamma);
  const std::vector<GridPoint> points = expand_grid(manifest);
  for (const GridPoint& p : points) p.config.validate(mdp);

  fs::path out_dir = manifest.output_dir;
  if (out_dir.is_relative() && !options.output_root.empty()) out_dir = options.output_root / out_dir;
  std::error_code ec;
  const bool created_dir = !fs::exists(out_dir, ec);
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + out_dir.string());

  FileTracker tracker;
  try {
    const QStarFiles qs = compute_qstar(manifest.map_path, manifest.gamma, manifest.qstar_tol,
                                        out_dir / "qstar_cache");
    if (!qs.reused) {
      tracker.add(qs.q_csv);
      tracker.add(qs.policy_csv);
    }
    const QTable q_star = read_qtable_csv(qs.q_csv);
    if (q_star.n_states() != mdp.n_states() || q_star.n_actions() != mdp.n_actions())
      throw Error(ErrorCode::IoError, "cached Q* does not match the map");

    std::vector<Job> jobs;
    for (std::size_t p = 0; p < points.size(); ++p)
      for (std::size_t s = 0; s < manifest.n_seeds; ++s) jobs.push_back({p, s});
    std::vector<RunRecord> records(jobs.size());

    const bool parallel_runs = jobs.size() >= options.threads;
    WorkerPool pool(parallel_runs ? options.threads : 1);
    pool.parallel_for(jobs.size(), [&](std::size_t j) {
      const GridPoint& point = points[jobs[j].point];
      ExperimentConfig config = point.config;
      config.master_seed = manifest.config.master_seed + jobs[j].seed_index;
      config.workers = parallel_runs ? 1 : options.threads;
      const auto start = std::chrono::steady_clock::now();
      RunRecord& rec = records[j];
      rec.result = run_compfedrl(config, mdp, q_star);
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

      const std::string stem = point.slug + "_seed" + std::to_string(config.master_seed);
      std::ostringstream trace_csv;
      write_trace_csv(trace_csv, rec.result.trace);
      write_text(out_dir / (stem + ".csv"), trace_csv.str(), tracker);

      const std::vector<double> overlay = theory_overlay(config, mdp, rec.result.trace, manifest.delta);
      std::ostringstream theory_csv;
      theory_csv << "round,empirical_linf,theory_bound\n";
      for (std::size_t t = 0; t < overlay.size(); ++t)
        theory_csv << t << ',' << fmt(rec.result.trace[t].linf_error) << ',' << fmt(overlay[t]) << '\n';
      write_text(out_dir / (stem + "_theory.csv"), theory_csv.str(), tracker);

      const json summary = summary_json(point, config.master_seed, rec.result, rec.seconds, overlay);
      write_text(out_dir / (stem + "_summary.json"), summary.dump(2) + "\n", tracker);
    });

    // Seed aggregates per grid point.
    for (std::size_t p = 0; p < points.size(); ++p) {
      std::vector<const RunResult*> runs;
      for (std::size_t j = 0; j < jobs.size(); ++j)
        if (jobs[j].point == p) runs.push_back(&records[j].result);
      std::ostringstream agg;
      agg << "round,rmse_mean,rmse_std,rmse_min,rmse_max,linf_mean,bits_cumulative_mean\n";
      const std::size_t rounds = runs.front()->trace.size();
      const double n = static_cast<double>(runs.size());
      for (std::size_t t = 0; t < rounds; ++t) {
        double sum = 0.0, sq = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
        double linf = 0.0, bits = 0.0;
        for (const RunResult* r : runs) {
          const RoundMetrics& m = r->trace[t];
          sum += m.rmse;
          sq += m.rmse * m.rmse;
          lo = std::min(lo, m.rmse);
          hi = std::max(hi, m.rmse);
          linf += m.linf_error;
          bits += m.bits_cumulative;
        }
        const double mean = sum / n;
        const double var = runs.size() > 1 ? std::max(0.0, (sq - n * mean * mean) / (n - 1.0)) : 0.0;
        agg << t << ',' << fmt(mean) << ',' << fmt(std::sqrt(var)) << ',' << fmt(lo) << ','
            << fmt(hi) << ',' << fmt(linf / n) << ',' << fmt(bits / n) << '\n';
      }
      write_text(out_dir / (points[p].slug + "_agg.csv"), agg.str(), tracker);
    }
  } catch (...) {
    tracker.remove_all();
    if (created_dir) fs::remove_all(out_dir, ec);
    throw;
  }
  return ExperimentOutputs{tracker.files()};
}

}  // namespace fedq::harness
