#include "fedq/bellman.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

#include "fedq/kernels.hpp"

namespace fedq {

namespace {

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

std::vector<double> greedy_values(const QTable& q) {
  std::vector<double> v(q.n_states());
  if (q.n_actions() > 0) kernels::active().row_max(q.flat(), q.n_actions(), v);
  return v;
}

QTable exact_bellman(const TabularMDP& mdp, const QTable& q) {
  if (q.n_states() != mdp.n_states() || q.n_actions() != mdp.n_actions())
    throw Error(ErrorCode::ShapeMismatch, "exact_bellman: Q shape differs from the MDP");
  const std::vector<double> v = greedy_values(q);
  QTable out(q.n_states(), q.n_actions());
  if (auto next = mdp.deterministic_next(); !next.empty()) {
    kernels::active().sampled_backup(mdp.reward_mean().flat(), next, v, mdp.gamma(), out.flat());
    return out;
  }
  for (StateId s = 0; s < mdp.n_states(); ++s) {
    for (ActionId a = 0; a < mdp.n_actions(); ++a) {
      double expected = 0.0;
      for (const Successor& e : mdp.successors(s, a)) expected += e.prob * v[e.state];
      out(s, a) = mdp.reward_mean()(s, a) + mdp.gamma() * expected;
    }
  }
  return out;
}

QTable empirical_bellman(const QTable& q, std::span<const std::int32_t> next_states,
                         const QTable& rewards, double gamma) {
  require_same_shape(q, rewards, "empirical_bellman: reward table shape");
  if (next_states.size() != q.size())
    throw Error(ErrorCode::ShapeMismatch, "empirical_bellman: next-state table shape");
  for (std::int32_t s : next_states)
    if (s < 0 || static_cast<std::size_t>(s) >= q.n_states())
      throw Error(ErrorCode::IndexOutOfRange, "empirical_bellman: next state out of range");
  const std::vector<double> v = greedy_values(q);
  QTable out(q.n_states(), q.n_actions());
  kernels::active().sampled_backup(rewards.flat(), next_states, v, gamma, out.flat());
  return out;
}

ValueIterationResult value_iteration(const TabularMDP& mdp, double tol, std::size_t max_iter) {
  if (!(tol > 0.0)) throw Error(ErrorCode::ParamOutOfRange, "value_iteration: tol must be positive");
  ValueIterationResult result{QTable(mdp.n_states(), mdp.n_actions()), 0, 0.0};
  for (std::size_t it = 0; it <= max_iter; ++it) {
    QTable next = exact_bellman(mdp, result.q);
    result.residual = linf_distance(next, result.q);
    result.iterations = it;
    if (result.residual <= tol) return result;
    result.q = std::move(next);
  }
  throw Error(ErrorCode::NotConverged,
              "value_iteration: residual " + format_double(result.residual) + " after " +
                  std::to_string(max_iter) + " iterations");
}

Policy greedy_policy(const QTable& q) {
  Policy pi(q.n_states(), 0);
  for (StateId s = 0; s < q.n_states(); ++s) {
    const auto row = q.row(s);
    for (ActionId a = 1; a < row.size(); ++a)
      if (row[a] > row[pi[s]]) pi[s] = a;
  }
  return pi;
}

double rmse(const QTable& q, const QTable& q_star) {
  require_same_shape(q, q_star, "rmse");
  if (q.size() == 0) return 0.0;
  return std::sqrt(kernels::active().sum_sq_diff(q.flat(), q_star.flat()) /
                   static_cast<double>(q.size()));
}

double linf_distance(const QTable& a, const QTable& b) {
  require_same_shape(a, b, "linf_distance");
  return kernels::active().max_abs_diff(a.flat(), b.flat());
}

void write_qtable_csv(std::ostream& out, const QTable& q) {
  out << "state,action,q\n";
  for (StateId s = 0; s < q.n_states(); ++s)
    for (ActionId a = 0; a < q.n_actions(); ++a)
      out << s << ',' << a << ',' << format_double(q(s, a)) << '\n';
}

void write_policy_csv(std::ostream& out, const Policy& policy) {
  out << "state,action\n";
  for (StateId s = 0; s < policy.size(); ++s) out << s << ',' << policy[s] << '\n';
}

}  // namespace fedq
