#pragma once

#include <cstdint>

// Dense float kernels. Every kernel has a serial reference implementation and
// an OpenMP version; both share the same per-row inner loop, so their outputs
// are bitwise identical for any thread count. The un-suffixed entry points
// dispatch on problem size.
namespace taskgrid::kern {

// C(M,N) = A(M,K) * B(K,N), row-major. accumulate=true adds into C.
void gemm_nn_serial(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate);
void gemm_nn_omp(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate);
void gemm_nn(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate);

// C(M,N) = A(M,K) * B(N,K)^T.
void gemm_nt_serial(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate);
void gemm_nt_omp(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate);
void gemm_nt(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate);

// C(M,N) = A(K,M)^T * B(K,N).
void gemm_tn_serial(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate);
void gemm_tn_omp(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate);
void gemm_tn(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate);

// y[i] = f(x[i]) over n elements, parallel when n is large. F must be a plain
// value function (no cross-element state) so chunking cannot change results.
template <class F>
void map_serial(const float* x, float* y, int64_t n, F f) {
  for (int64_t i = 0; i < n; ++i) y[i] = f(x[i]);
}

void parallel_for(int64_t n, int64_t grain, void* ctx, void (*body)(void*, int64_t, int64_t));

// Convenience wrapper taking any callable with (begin, end).
template <class F>
void parallel_for(int64_t n, int64_t grain, F&& f) {
  struct Ctx {
    F* f;
  } ctx{&f};
  parallel_for(n, grain, &ctx, [](void* c, int64_t b, int64_t e) { (*static_cast<Ctx*>(c)->f)(b, e); });
}

int max_threads();

}  // namespace taskgrid::kern
