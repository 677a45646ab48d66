#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "fedq/mdp.hpp"
#include "fedq/qtable.hpp"

namespace fedq {

/// Deterministic greedy policy, one action per state.
using Policy = std::vector<ActionId>;

/// V(s) = max_a Q(s,a).
std::vector<double> greedy_values(const QTable& q);

/// T(Q)(s,a) = r(s,a) + gamma * sum_{s'} P(s'|s,a) max_{a'} Q(s',a').
QTable exact_bellman(const TabularMDP& mdp, const QTable& q);

/// Single-sample operator: rewards(s,a) + gamma * max_{a'} Q(next(s,a), a').
QTable empirical_bellman(const QTable& q, std::span<const std::int32_t> next_states,
                         const QTable& rewards, double gamma);

struct ValueIterationResult {
  QTable q;
  std::size_t iterations = 0;
  double residual = 0.0;  // ||T(Q) - Q||_inf at the returned Q
};

/// Iterates Q <- T(Q) from Q = 0 until ||T(Q) - Q||_inf <= tol. The returned
/// table is the last iterate checked, so the fixed-point error is at most
/// tol * gamma / (1 - gamma). Throws NotConverged after max_iter sweeps.
ValueIterationResult value_iteration(const TabularMDP& mdp, double tol, std::size_t max_iter);

/// argmax_a Q(s,a), lowest action index on ties.
Policy greedy_policy(const QTable& q);

double rmse(const QTable& q, const QTable& q_star);

/// ||a - b||_inf
double linf_distance(const QTable& a, const QTable& b);

/// CSV "state,action,q", one row per pair, full double precision.
void write_qtable_csv(std::ostream& out, const QTable& q);

/// CSV "state,action".
void write_policy_csv(std::ostream& out, const Policy& policy);

}  // namespace fedq
