#include <cstring>
#include <tuple>
#include <vector>

#include "doctest.h"
#include "taskgrid/kernels.hpp"
#include "taskgrid/rng.hpp"

using namespace taskgrid;

namespace {

std::vector<float> randvec(Rng& r, int64_t n) {
  std::vector<float> v(n);
  for (auto& x : v) x = r.uniform_real() * 2.0f - 1.0f;
  return v;
}

// Textbook triple loop in double, for value checks (not bitwise).
std::vector<float> naive_nn(const std::vector<float>& a, const std::vector<float>& b, int m, int k, int n) {
  std::vector<float> c(static_cast<int64_t>(m) * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0;
      for (int kk = 0; kk < k; ++kk) s += static_cast<double>(a[i * k + kk]) * b[kk * n + j];
      c[i * n + j] = static_cast<float>(s);
    }
  return c;
}

}  // namespace

TEST_CASE("gemm_nn multiplies by identity") {
  const int n = 5;
  std::vector<float> eye(n * n, 0.0f);
  for (int i = 0; i < n; ++i) eye[i * n + i] = 1.0f;
  Rng r(1);
  auto x = randvec(r, n * n);
  std::vector<float> y(n * n);
  kern::gemm_nn(eye.data(), x.data(), y.data(), n, n, n, false);
  CHECK(std::memcmp(x.data(), y.data(), sizeof(float) * n * n) == 0);
}

TEST_CASE("gemm variants match a naive reference") {
  Rng r(2);
  const int m = 7, k = 13, n = 9;
  auto a = randvec(r, m * k);
  auto b = randvec(r, k * n);
  auto want = naive_nn(a, b, m, k, n);

  std::vector<float> c(m * n);
  kern::gemm_nn(a.data(), b.data(), c.data(), m, k, n, false);
  for (int i = 0; i < m * n; ++i) CHECK(c[i] == doctest::Approx(want[i]).epsilon(1e-5));

  // A * B^T with B stored transposed must agree with A * B.
  std::vector<float> bt(n * k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < n; ++j) bt[j * k + i] = b[i * n + j];
  std::vector<float> c2(m * n);
  kern::gemm_nt(a.data(), bt.data(), c2.data(), m, k, n, false);
  for (int i = 0; i < m * n; ++i) CHECK(c2[i] == doctest::Approx(want[i]).epsilon(1e-5));

  // A^T stored transposed likewise.
  std::vector<float> at(k * m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j) at[j * m + i] = a[i * k + j];
  std::vector<float> c3(m * n);
  kern::gemm_tn(at.data(), b.data(), c3.data(), m, k, n, false);
  for (int i = 0; i < m * n; ++i) CHECK(c3[i] == doctest::Approx(want[i]).epsilon(1e-5));
}

TEST_CASE("accumulate adds into the output") {
  Rng r(3);
  const int m = 4, k = 6, n = 5;
  auto a = randvec(r, m * k);
  auto b = randvec(r, k * n);
  std::vector<float> base(m * n, 2.0f), c = base;
  kern::gemm_nn(a.data(), b.data(), c.data(), m, k, n, true);
  std::vector<float> prod(m * n);
  kern::gemm_nn(a.data(), b.data(), prod.data(), m, k, n, false);
  for (int i = 0; i < m * n; ++i) CHECK(c[i] == doctest::Approx(base[i] + prod[i]).epsilon(1e-6));
}

TEST_CASE("serial and OpenMP paths are bitwise identical") {
  Rng r(4);
  for (auto [m, k, n] : {std::tuple{3, 5, 4}, std::tuple{64, 96, 256}, std::tuple{129, 33, 65}}) {
    const size_t csize = static_cast<size_t>(m) * n;
    {
      auto a = randvec(r, static_cast<int64_t>(m) * k);  // {m,k}
      auto b = randvec(r, static_cast<int64_t>(k) * n);  // {k,n}
      std::vector<float> cs(csize), co(csize);
      kern::gemm_nn_serial(a.data(), b.data(), cs.data(), m, k, n, false);
      kern::gemm_nn_omp(a.data(), b.data(), co.data(), m, k, n, false);
      CHECK(std::memcmp(cs.data(), co.data(), csize * sizeof(float)) == 0);
    }
    {
      auto a = randvec(r, static_cast<int64_t>(m) * k);  // {m,k}
      auto b = randvec(r, static_cast<int64_t>(n) * k);  // {n,k}, read transposed
      std::vector<float> cs(csize), co(csize);
      kern::gemm_nt_serial(a.data(), b.data(), cs.data(), m, k, n, false);
      kern::gemm_nt_omp(a.data(), b.data(), co.data(), m, k, n, false);
      CHECK(std::memcmp(cs.data(), co.data(), csize * sizeof(float)) == 0);
    }
    {
      auto a = randvec(r, static_cast<int64_t>(k) * m);  // {k,m}, read transposed
      auto b = randvec(r, static_cast<int64_t>(k) * n);  // {k,n}
      std::vector<float> cs(csize), co(csize);
      kern::gemm_tn_serial(a.data(), b.data(), cs.data(), m, k, n, false);
      kern::gemm_tn_omp(a.data(), b.data(), co.data(), m, k, n, false);
      CHECK(std::memcmp(cs.data(), co.data(), csize * sizeof(float)) == 0);
    }
  }
}

TEST_CASE("parallel_for covers the range exactly once") {
  std::vector<int> hits(1000, 0);
  kern::parallel_for(1000, 64, [&](int64_t b, int64_t e) {
    for (int64_t i = b; i < e; ++i) hits[i] += 1;
  });
  for (int h : hits) CHECK(h == 1);
}
