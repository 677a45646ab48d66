#pragma once

// Data-parallel inner loops of the Q-learning workbench.
//
// Every kernel has a scalar reference implementation and, where the target
// supports it, an AVX2 variant. The variant is chosen once at runtime from
// the CPU feature bits; FEDQ_SIMD=scalar in the environment forces the
// reference path.
//
// Elementwise kernels evaluate the same operations in the same order in both
// variants and are bit-identical. Reductions that are sums may differ in the
// last bits (lane-wise partial sums); max-type reductions are exact.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace fedq::kernels {

struct KernelTable {
  std::string_view name;

  /// out[s] = max_a q[s * n_actions + a]
  void (*row_max)(std::span<const double> q, std::size_t n_actions, std::span<double> out);

  /// out[i] = r[i] + gamma * v[next[i]]
  void (*sampled_backup)(std::span<const double> rewards, std::span<const std::int32_t> next,
                         std::span<const double> values, double gamma, std::span<double> out);

  /// out[i] = (1 - eta) * q[i] + eta * (r[i] + gamma * v[next[i]])
  void (*q_update)(std::span<const double> q, std::span<const double> rewards,
                   std::span<const std::int32_t> next, std::span<const double> values, double eta,
                   double gamma, std::span<double> out);

  /// out[i] = a[i] - b[i]
  void (*sub)(std::span<const double> a, std::span<const double> b, std::span<double> out);

  /// out[i] = a[i] + b[i]
  void (*add)(std::span<const double> a, std::span<const double> b, std::span<double> out);

  /// y[i] = y[i] + alpha * x[i]
  void (*axpy)(double alpha, std::span<const double> x, std::span<double> y);

  /// out[i] = wa * a[i] + wb * b[i]
  void (*lincomb)(double wa, std::span<const double> a, double wb, std::span<const double> b,
                  std::span<double> out);

  /// max_i |a[i] - b[i]|
  double (*max_abs_diff)(std::span<const double> a, std::span<const double> b);

  /// sum_i (a[i] - b[i])^2
  double (*sum_sq_diff)(std::span<const double> a, std::span<const double> b);
};

const KernelTable& scalar_kernels() noexcept;

/// nullptr when the build or the CPU lacks AVX2.
const KernelTable* avx2_kernels() noexcept;

/// The table used by the library. Resolved on first use.
const KernelTable& active() noexcept;

}  // namespace fedq::kernels
