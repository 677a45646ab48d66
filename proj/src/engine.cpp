#include "fedq/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedq/analysis.hpp"
#include "fedq/bellman.hpp"
#include "fedq/kernels.hpp"
#include "fedq/worker_pool.hpp"

namespace fedq {

namespace {

struct Workspace {
  SampleTables samples;
  std::vector<double> values;
};

// One synchronous epoch from `in` into `out` (distinct tables).
void epoch_into(const QTable& in, QTable& out, const TabularMDP& mdp, double eta, RngStream& rng,
                Workspace& ws) {
  synchronous_sample_into(mdp, rng, ws.samples);
  ws.values.resize(in.n_states());
  const auto& k = kernels::active();
  k.row_max(in.flat(), in.n_actions(), ws.values);
  k.q_update(in.flat(), ws.samples.rewards.flat(), ws.samples.next_states, ws.values, eta,
             mdp.gamma(), out.flat());
}

// Local phase in place: `local` holds Qbar on entry and Q_{t,K} on exit.
void local_phase_inplace(QTable& local, QTable& scratch, std::size_t local_epochs,
                         const TabularMDP& mdp, double eta, std::uint64_t seed, std::size_t agent,
                         std::size_t round, Workspace& ws) {
  for (std::size_t k = 0; k < local_epochs; ++k) {
    RngStream rng(seed, StreamPath{StreamPurpose::Environment, agent, round, k});
    epoch_into(local, scratch, mdp, eta, rng, ws);
    std::swap(local, scratch);
  }
}

struct AgentSlot {
  QTable local;
  QTable scratch;
  Workspace ws;
  std::vector<double> delta;
  EfState ef;
  SparseVector upload;
  CompressorConstants constants;
  std::size_t entries = 0;
};

}  // namespace

UploadMode ExperimentConfig::effective_mode() const noexcept {
  if (mode != UploadMode::Auto) return mode;
  return compressor.biased() ? UploadMode::ErrorFeedback : UploadMode::Direct;
}

void ExperimentConfig::validate(const TabularMDP& mdp) const {
  auto fail = [](const char* what) { throw Error(ErrorCode::ConfigError, what); };
  if (n_agents < 1) fail("n_agents must be at least 1");
  if (local_epochs < 1) fail("local_epochs must be at least 1");
  if (rounds < 1) fail("rounds must be at least 1");
  if (!(eta > 0.0 && eta <= 1.0)) throw Error(ErrorCode::ParamOutOfRange, "eta must lie in (0,1]");
  if (!(beta > 0.0 && beta <= 1.0)) throw Error(ErrorCode::ParamOutOfRange, "beta must lie in (0,1]");
  if (fpp < 1) fail("fpp must be positive");
  if (workers < 1) fail("workers must be at least 1");
  compressor.validate(mdp.n_pairs());
  const double q0_cap = mdp.r_max() / (1.0 - mdp.gamma());
  if (q0.kind == InitialQ::Kind::Constant && !(std::abs(q0.value) <= q0_cap))
    throw Error(ErrorCode::ParamOutOfRange, "||Q0||_inf exceeds r_max / (1 - gamma)");
  if (!allow_unpaired) {
    if (mode == UploadMode::Direct && compressor.kind == CompressorKind::TopK)
      fail("direct upload with Top-K needs allow_unpaired");
    if (mode == UploadMode::ErrorFeedback && compressor.kind == CompressorKind::SparsifiedK)
      fail("error feedback with Sparsified-K needs allow_unpaired");
  }
}

QTable local_epoch(const QTable& q, const TabularMDP& mdp, double eta, RngStream& rng) {
  if (q.n_states() != mdp.n_states() || q.n_actions() != mdp.n_actions())
    throw Error(ErrorCode::ShapeMismatch, "local_epoch: Q shape differs from the MDP");
  if (!(eta > 0.0 && eta <= 1.0)) throw Error(ErrorCode::ParamOutOfRange, "eta must lie in (0,1]");
  QTable out(q.n_states(), q.n_actions());
  Workspace ws;
  epoch_into(q, out, mdp, eta, rng, ws);
  return out;
}

QTable run_local_phase(const QTable& q_bar, std::size_t local_epochs, const TabularMDP& mdp,
                       double eta, std::uint64_t master_seed, std::size_t agent,
                       std::size_t round) {
  if (local_epochs < 1) throw Error(ErrorCode::ConfigError, "local_epochs must be at least 1");
  if (q_bar.n_states() != mdp.n_states() || q_bar.n_actions() != mdp.n_actions())
    throw Error(ErrorCode::ShapeMismatch, "run_local_phase: Q shape differs from the MDP");
  QTable local = q_bar;
  QTable scratch(q_bar.n_states(), q_bar.n_actions());
  Workspace ws;
  local_phase_inplace(local, scratch, local_epochs, mdp, eta, master_seed, agent, round, ws);
  return local;
}

QTable aggregate(const QTable& q_bar, const std::vector<SparseVector>& uploads, double beta) {
  if (uploads.empty()) throw Error(ErrorCode::EmptyAgentList, "aggregate needs at least one upload");
  std::vector<double> sum(q_bar.size(), 0.0);
  for (const SparseVector& h : uploads) {
    if (h.dimension != q_bar.size())
      throw Error(ErrorCode::DimensionMismatch, "upload dimension differs from the Q table");
    h.add_to(sum);
  }
  QTable out = q_bar;
  kernels::active().axpy(beta / static_cast<double>(uploads.size()), sum, out.flat());
  return out;
}

std::size_t payload_entries(const SparseVector& h) noexcept { return h.entries(); }

QTable initial_table(const ExperimentConfig& config, const TabularMDP& mdp) {
  const double fill = config.q0.kind == InitialQ::Kind::Constant ? config.q0.value : 0.0;
  return QTable(mdp.n_states(), mdp.n_actions(), fill);
}

RunResult run_compfedrl(const ExperimentConfig& config, const TabularMDP& mdp,
                        const QTable& q_star, const RoundObserver& observer) {
  config.validate(mdp);
  if (q_star.n_states() != mdp.n_states() || q_star.n_actions() != mdp.n_actions())
    throw Error(ErrorCode::ShapeMismatch, "Q* shape differs from the MDP");

  const std::size_t d = mdp.n_pairs();
  const std::size_t I = config.n_agents;
  const CompressorSpec& spec = config.compressor;
  const bool identity = spec.kind == CompressorKind::Identity;
  // With beta = 1 the server step is a plain average of the local tables.
  const bool plain_average = identity && config.beta == 1.0;
  const bool error_feedback = config.effective_mode() == UploadMode::ErrorFeedback;
  const auto& kern = kernels::active();
  const analysis::BitModel bit_model{config.fpp};

  RunResult result;
  result.trace.reserve(config.rounds + 1);
  QTable q_bar = initial_table(config, mdp);
  QTable next_bar(mdp.n_states(), mdp.n_actions());
  std::vector<double> sum(d);

  RoundMetrics m0;
  m0.rmse = rmse(q_bar, q_star);
  m0.linf_error = linf_distance(q_bar, q_star);
  result.trace.push_back(m0);
  if (observer) observer(0, q_bar);

  std::vector<AgentSlot> agents(I);
  for (AgentSlot& a : agents) {
    a.local = QTable(mdp.n_states(), mdp.n_actions());
    a.scratch = QTable(mdp.n_states(), mdp.n_actions());
    a.delta.assign(d, 0.0);
    if (error_feedback) a.ef = EfState(d);
  }

  WorkerPool pool(std::min(config.workers, I));
  double cumulative_bits = 0.0;
  std::uint64_t cumulative_total = 0;

  for (std::size_t t = 0; t < config.rounds; ++t) {
    pool.parallel_for(I, [&](std::size_t i) {
      AgentSlot& a = agents[i];
      std::copy(q_bar.flat().begin(), q_bar.flat().end(), a.local.flat().begin());
      local_phase_inplace(a.local, a.scratch, config.local_epochs, mdp, config.eta,
                          config.master_seed, i, t, a.ws);
      if (identity) {
        a.entries = d;
        a.constants = CompressorConstants{};
        if (plain_average) return;
      }
      kern.sub(a.local.flat(), q_bar.flat(), a.delta);
      if (identity) {
        a.upload = SparseVector::full(a.delta);
        return;
      }
      RngStream coins(config.master_seed, StreamPath{StreamPurpose::Compressor, i, t, 0});
      if (error_feedback) {
        a.upload = ef_compress(a.ef, a.delta, spec, coins, &a.constants);
      } else {
        a.upload = direct_compress(a.delta, spec, coins);
        a.constants = compressor_constants(a.delta, spec);
      }
      a.entries = a.upload.entries();
    });

    // Server: fixed ascending-agent reduction.
    std::fill(sum.begin(), sum.end(), 0.0);
    const double weight = config.beta / static_cast<double>(I);
    if (plain_average) {
      // (1/I) sum_i Q_i rather than Qbar + (1/I) sum_i (Q_i - Qbar): the same
      // step algebraically, but it reproduces the centralized and plain
      // averaging recursions bit for bit.
      for (const AgentSlot& a : agents) kern.add(sum, a.local.flat(), sum);
      kern.lincomb(0.0, q_bar.flat(), weight, sum, next_bar.flat());
      std::swap(q_bar, next_bar);
    } else {
      for (const AgentSlot& a : agents) a.upload.add_to(sum);
      kern.axpy(weight, sum, q_bar.flat());
    }

    RoundMetrics m;
    m.round = t + 1;
    m.rmse = rmse(q_bar, q_star);
    m.linf_error = linf_distance(q_bar, q_star);
    m.alpha_min = 1.0;
    for (const AgentSlot& a : agents) {
      m.total_entries_round += a.entries;
      m.total_bits_round += analysis::payload_bits(spec.kind, d, a.entries, bit_model);
      m.alpha_min = std::min(m.alpha_min, a.constants.alpha);
      m.q2_max = std::max(m.q2_max, a.constants.q2);
      m.q_inf_max = std::max(m.q_inf_max, a.constants.q_inf);
    }
    cumulative_total += m.total_bits_round;
    m.bits_round = static_cast<double>(m.total_bits_round) / static_cast<double>(I);
    m.payload_entries = static_cast<double>(m.total_entries_round) / static_cast<double>(I);
    cumulative_bits = static_cast<double>(cumulative_total) / static_cast<double>(I);
    m.bits_cumulative = cumulative_bits;
    result.trace.push_back(m);
    if (observer) observer(t + 1, q_bar);
  }
  result.final_q = std::move(q_bar);
  return result;
}

}  // namespace fedq
