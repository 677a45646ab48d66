#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "doctest.h"
#include "fedq/kernels.hpp"
#include "test_util.hpp"

using namespace fedq;

namespace {

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

struct Inputs {
  std::vector<double> q, r, x, y;
  std::vector<std::int32_t> next;
  std::vector<double> values;
};

Inputs make_inputs(std::mt19937_64& gen, std::size_t n_states, std::size_t n_actions) {
  Inputs in;
  const std::size_t d = n_states * n_actions;
  in.q = test::random_vector(gen, d, 5.0);
  in.r = test::random_vector(gen, d, 1.5);
  in.x = test::random_vector(gen, d, 3.0);
  in.y = test::random_vector(gen, d, 3.0);
  in.values = test::random_vector(gen, n_states, 5.0);
  std::uniform_int_distribution<std::int32_t> pick(0, static_cast<std::int32_t>(n_states) - 1);
  in.next.resize(d);
  for (auto& s : in.next) s = pick(gen);
  // Ties and signed zeros inside rows exercise the max tie rule.
  if (d >= 4) {
    in.q[1] = in.q[0];
    in.q[2] = 0.0;
    in.q[3] = -0.0;
  }
  return in;
}

}  // namespace

TEST_CASE("scalar kernels follow their definitions") {
  const auto& k = kernels::scalar_kernels();
  std::vector<double> q = {1, 3, 2, 0, -1, -5, -2, -3};
  std::vector<double> v(2);
  k.row_max(q, 4, v);
  CHECK(v == std::vector<double>{3, -1});

  std::vector<double> r = {1, 0};
  std::vector<std::int32_t> next = {1, 0};
  std::vector<double> out(2);
  k.sampled_backup(r, next, std::vector<double>{10, 20}, 0.5, out);
  CHECK(out == std::vector<double>{11, 5});
  k.q_update(std::vector<double>{2, 2}, r, next, std::vector<double>{10, 20}, 0.5, 0.5, out);
  CHECK(out == std::vector<double>{6.5, 3.5});

  CHECK(k.max_abs_diff(std::vector<double>{1, -4}, std::vector<double>{0, 0}) == 4.0);
  CHECK(k.sum_sq_diff(std::vector<double>{3, 4}, std::vector<double>{0, 0}) == 25.0);
}

TEST_CASE("active table is one of the compiled variants") {
  const auto& a = kernels::active();
  const bool known = &a == &kernels::scalar_kernels() || &a == kernels::avx2_kernels();
  CHECK(known);
}

TEST_CASE("AVX2 kernels match the scalar reference") {
  const kernels::KernelTable* simd = kernels::avx2_kernels();
  if (!simd) {
    MESSAGE("AVX2 unavailable; equivalence not exercised");
    return;
  }
  const auto& ref = kernels::scalar_kernels();
  std::mt19937_64 gen(7);
  for (std::size_t n_states : {1u, 2u, 3u, 4u, 5u, 7u, 25u, 121u, 200u}) {
    for (std::size_t n_actions : {1u, 3u, 4u}) {
      CAPTURE(n_states);
      CAPTURE(n_actions);
      const Inputs in = make_inputs(gen, n_states, n_actions);
      const std::size_t d = n_states * n_actions;

      std::vector<double> a(n_states), b(n_states);
      ref.row_max(in.q, n_actions, a);
      simd->row_max(in.q, n_actions, b);
      CHECK(bit_equal(a, b));

      a.assign(d, 0.0);
      b.assign(d, 0.0);
      ref.sampled_backup(in.r, in.next, in.values, 0.8, a);
      simd->sampled_backup(in.r, in.next, in.values, 0.8, b);
      CHECK(bit_equal(a, b));

      ref.q_update(in.q, in.r, in.next, in.values, 0.05, 0.8, a);
      simd->q_update(in.q, in.r, in.next, in.values, 0.05, 0.8, b);
      CHECK(bit_equal(a, b));

      ref.sub(in.x, in.y, a);
      simd->sub(in.x, in.y, b);
      CHECK(bit_equal(a, b));

      ref.add(in.x, in.y, a);
      simd->add(in.x, in.y, b);
      CHECK(bit_equal(a, b));

      a = in.y;
      b = in.y;
      ref.axpy(0.016, in.x, a);
      simd->axpy(0.016, in.x, b);
      CHECK(bit_equal(a, b));

      ref.lincomb(0.2, in.x, 0.04, in.y, a);
      simd->lincomb(0.2, in.x, 0.04, in.y, b);
      CHECK(bit_equal(a, b));

      CHECK(ref.max_abs_diff(in.x, in.y) == simd->max_abs_diff(in.x, in.y));
      const double s_ref = ref.sum_sq_diff(in.x, in.y);
      const double s_simd = simd->sum_sq_diff(in.x, in.y);
      CHECK(std::abs(s_ref - s_simd) <= 1e-13 * std::max(1.0, s_ref));
    }
  }
}

TEST_CASE("in-place elementwise calls are safe") {
  for (const kernels::KernelTable* t : {&kernels::scalar_kernels(), kernels::avx2_kernels()}) {
    if (!t) continue;
    std::vector<double> acc(9, 1.0), x(9, 2.0);
    t->add(acc, x, acc);
    CHECK(acc == std::vector<double>(9, 3.0));
  }
}
