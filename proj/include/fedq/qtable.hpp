#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fedq/error.hpp"

namespace fedq {

using StateId = std::size_t;
using ActionId = std::size_t;

/// |S| x |A| table of action values, stored row-major by state. Also used for
/// any state-action shaped quantity (sampled rewards, error memories, deltas).
class QTable {
 public:
  QTable() = default;
  QTable(std::size_t n_states, std::size_t n_actions, double fill = 0.0)
      : n_states_(n_states), n_actions_(n_actions), values_(n_states * n_actions, fill) {}

  std::size_t n_states() const noexcept { return n_states_; }
  std::size_t n_actions() const noexcept { return n_actions_; }
  std::size_t size() const noexcept { return values_.size(); }

  double& operator()(StateId s, ActionId a) { return values_[s * n_actions_ + a]; }
  double operator()(StateId s, ActionId a) const { return values_[s * n_actions_ + a]; }

  std::span<double> flat() noexcept { return values_; }
  std::span<const double> flat() const noexcept { return values_; }

  std::span<const double> row(StateId s) const {
    return std::span<const double>(values_).subspan(s * n_actions_, n_actions_);
  }

  bool same_shape(const QTable& other) const noexcept {
    return n_states_ == other.n_states_ && n_actions_ == other.n_actions_;
  }

  friend bool operator==(const QTable&, const QTable&) = default;

 private:
  std::size_t n_states_ = 0;
  std::size_t n_actions_ = 0;
  std::vector<double> values_;
};

inline void require_same_shape(const QTable& a, const QTable& b, const char* where) {
  if (!a.same_shape(b)) throw Error(ErrorCode::ShapeMismatch, where);
}

}  // namespace fedq
