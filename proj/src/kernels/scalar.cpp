#include <algorithm>
#include <cmath>

#include "fedq/kernels.hpp"

namespace fedq::kernels {

namespace {

void row_max(std::span<const double> q, std::size_t n_actions, std::span<double> out) {
  for (std::size_t s = 0; s < out.size(); ++s) {
    const double* row = q.data() + s * n_actions;
    double m = row[0];
    for (std::size_t a = 1; a < n_actions; ++a) m = row[a] > m ? row[a] : m;
    out[s] = m;
  }
}

void sampled_backup(std::span<const double> rewards, std::span<const std::int32_t> next,
                    std::span<const double> values, double gamma, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double g = gamma * values[static_cast<std::size_t>(next[i])];
    out[i] = rewards[i] + g;
  }
}

void q_update(std::span<const double> q, std::span<const double> rewards,
              std::span<const std::int32_t> next, std::span<const double> values, double eta,
              double gamma, std::span<double> out) {
  const double keep = 1.0 - eta;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double target = rewards[i] + gamma * values[static_cast<std::size_t>(next[i])];
    const double a = keep * q[i];
    const double b = eta * target;
    out[i] = a + b;
  }
}

void sub(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
}

void add(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = y[i] + alpha * x[i];
}

void lincomb(double wa, std::span<const double> a, double wb, std::span<const double> b,
             std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = wa * a[i];
    const double y = wb * b[i];
    out[i] = x + y;
  }
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double sum_sq_diff(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

constexpr KernelTable kScalar{
    "scalar", row_max, sampled_backup, q_update, sub, add, axpy, lincomb, max_abs_diff,
    sum_sq_diff,
};

}  // namespace

const KernelTable& scalar_kernels() noexcept { return kScalar; }

}  // namespace fedq::kernels
