// Times the serial row kernels against the OpenMP dispatch path and checks
// that both produce identical bytes.
#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "taskgrid/kernels.hpp"
#include "taskgrid/rng.hpp"

using namespace taskgrid;

namespace {

double time_ms(const std::function<void()>& fn, int iters) {
  fn();  // warm up
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < iters; ++i) fn();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / iters;
}

void bench_case(int m, int k, int n, int iters) {
  Rng rng(1234);
  std::vector<float> a(static_cast<size_t>(m) * k), b(static_cast<size_t>(k) * n);
  for (auto& v : a) v = rng.uniform_real() - 0.5f;
  for (auto& v : b) v = rng.uniform_real() - 0.5f;
  std::vector<float> c_serial(static_cast<size_t>(m) * n), c_par(c_serial.size());

  double serial = time_ms([&] { kern::gemm_nn_serial(a.data(), b.data(), c_serial.data(), m, k, n, false); }, iters);
  double par = time_ms([&] { kern::gemm_nn(a.data(), b.data(), c_par.data(), m, k, n, false); }, iters);
  bool same = std::memcmp(c_serial.data(), c_par.data(), c_serial.size() * sizeof(float)) == 0;
  double gflops = 2.0 * m * k * n / 1e6;  // per ms

  std::printf("%5d x %5d x %5d   serial %8.3f ms (%6.2f GFLOP/s)   dispatch %8.3f ms (%6.2f GFLOP/s)   x%.2f   bits %s\n",
              m, k, n, serial, gflops / serial, par, gflops / par, serial / par, same ? "equal" : "DIFFER");
  if (!same) std::exit(1);
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("openmp: %d threads\n", omp_get_max_threads());
#else
  std::printf("openmp: unavailable (serial build)\n");
#endif
  bench_case(16, 64, 64, 200);
  bench_case(64, 147, 128, 200);
  bench_case(256, 128, 256, 50);
  bench_case(512, 256, 512, 20);
  bench_case(1024, 512, 512, 5);
  return 0;
}
