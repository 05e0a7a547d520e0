#include "taskgrid/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace taskgrid::kern {

namespace {

// One output row of C = A*B. k ascending, so serial and OMP agree bitwise.
inline void nn_row(const float* arow, const float* b, float* crow, int k, int n, bool accumulate) {
  if (!accumulate)
    for (int j = 0; j < n; ++j) crow[j] = 0.0f;
  for (int kk = 0; kk < k; ++kk) {
    float av = arow[kk];
    const float* brow = b + static_cast<int64_t>(kk) * n;
    for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

// Fixed 4-lane accumulation order: vectorizable without -ffast-math, and the
// reduction order is part of the kernel contract (bitwise reproducible).
inline void nt_row(const float* arow, const float* b, float* crow, int k, int n, bool accumulate) {
  for (int j = 0; j < n; ++j) {
    const float* brow = b + static_cast<int64_t>(j) * k;
    float s0 = 0.0f, s1 = 0.0f, s2 = 0.0f, s3 = 0.0f;
    int kk = 0;
    for (; kk + 4 <= k; kk += 4) {
      s0 += arow[kk] * brow[kk];
      s1 += arow[kk + 1] * brow[kk + 1];
      s2 += arow[kk + 2] * brow[kk + 2];
      s3 += arow[kk + 3] * brow[kk + 3];
    }
    float s = (s0 + s1) + (s2 + s3);
    for (; kk < k; ++kk) s += arow[kk] * brow[kk];
    crow[j] = accumulate ? crow[j] + s : s;
  }
}

// Row i of C(M,N) = A(K,M)^T B(K,N): strided walk down column i of A.
inline void tn_row(const float* a, const float* b, float* crow, int i, int m, int k, int n, bool accumulate) {
  if (!accumulate)
    for (int j = 0; j < n; ++j) crow[j] = 0.0f;
  for (int kk = 0; kk < k; ++kk) {
    float av = a[static_cast<int64_t>(kk) * m + i];
    const float* brow = b + static_cast<int64_t>(kk) * n;
    for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

constexpr int64_t kGemmParallelFlops = 1 << 17;

inline bool use_omp(int m, int k, int n) {
#ifdef _OPENMP
  return max_threads() > 1 && 2ll * m * k * n >= kGemmParallelFlops && m > 1;
#else
  (void)m;
  (void)k;
  (void)n;
  return false;
#endif
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void gemm_nn_serial(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate) {
  for (int i = 0; i < m; ++i) nn_row(a + static_cast<int64_t>(i) * k, b, c + static_cast<int64_t>(i) * n, k, n, accumulate);
}

void gemm_nn_omp(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) nn_row(a + static_cast<int64_t>(i) * k, b, c + static_cast<int64_t>(i) * n, k, n, accumulate);
}

void gemm_nn(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate) {
  if (use_omp(m, k, n))
    gemm_nn_omp(a, b, c, m, k, n, accumulate);
  else
    gemm_nn_serial(a, b, c, m, k, n, accumulate);
}

void gemm_nt_serial(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate) {
  for (int i = 0; i < m; ++i) nt_row(a + static_cast<int64_t>(i) * k, b, c + static_cast<int64_t>(i) * n, k, n, accumulate);
}

void gemm_nt_omp(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) nt_row(a + static_cast<int64_t>(i) * k, b, c + static_cast<int64_t>(i) * n, k, n, accumulate);
}

void gemm_nt(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate) {
  if (use_omp(m, k, n))
    gemm_nt_omp(a, b, c, m, k, n, accumulate);
  else
    gemm_nt_serial(a, b, c, m, k, n, accumulate);
}

void gemm_tn_serial(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate) {
  for (int i = 0; i < m; ++i) tn_row(a, b, c + static_cast<int64_t>(i) * n, i, m, k, n, accumulate);
}

void gemm_tn_omp(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) tn_row(a, b, c + static_cast<int64_t>(i) * n, i, m, k, n, accumulate);
}

void gemm_tn(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate) {
  if (use_omp(m, k, n))
    gemm_tn_omp(a, b, c, m, k, n, accumulate);
  else
    gemm_tn_serial(a, b, c, m, k, n, accumulate);
}

void parallel_for(int64_t n, int64_t grain, void* ctx, void (*body)(void*, int64_t, int64_t)) {
  if (n <= 0) return;
#ifdef _OPENMP
  if (max_threads() > 1 && n > grain) {
    int chunks = static_cast<int>((n + grain - 1) / grain);
#pragma omp parallel for schedule(static)
    for (int c = 0; c < chunks; ++c) {
      int64_t b = c * grain;
      int64_t e = b + grain < n ? b + grain : n;
      body(ctx, b, e);
    }
    return;
  }
#else
  (void)grain;
#endif
  body(ctx, 0, n);
}

}  // namespace taskgrid::kern
