// Compares the serial reference kernels against the OpenMP variants and
// checks that both produce bitwise-identical results. The dispatching entry
// points are forced down the parallel path by zeroing the threshold.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <random>
#include <vector>

#include "deqn/kernels.hpp"

using namespace deqn::kernels;

namespace {

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(
             clock::now().time_since_epoch())
      .count();
}

template <typename F>
double time_best_of(int reps, F&& fn) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const double t0 = now_ms();
    fn();
    best = std::min(best, now_ms() - t0);
  }
  return best;
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

bool bitwise_equal(const std::vector<double>& a,
                   const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

void report(const char* label, double ts, double tp, bool equal,
            bool* all_equal) {
  *all_equal &= equal;
  std::printf("%-24s %12.3f %12.3f %8.2fx  %s\n", label, ts, tp, ts / tp,
              equal ? "bitwise-equal" : "MISMATCH");
}

}  // namespace

int main() {
  std::mt19937_64 rng(0);
  bool all_equal = true;
  parallel_threshold() = 0;  // force the OpenMP path in dispatchers

  std::printf("%-24s %12s %12s %8s\n", "kernel", "serial(ms)", "openmp(ms)",
              "speedup");

  {
    const int n = 1 << 22;
    auto x = random_vec(n, rng);
    std::vector<double> out_s(n), out_p(n);
    auto fn = [](double v) { return std::tanh(v); };
    const double ts =
        time_best_of(5, [&] { map1_serial(x.data(), out_s.data(), n, fn); });
    const double tp =
        time_best_of(5, [&] { map1(x.data(), out_p.data(), n, fn); });
    report("map tanh (4M)", ts, tp, bitwise_equal(out_s, out_p), &all_equal);
  }

  for (int B : {100, 2500}) {
    const int k = 256, m = 256;
    auto a = random_vec(static_cast<std::size_t>(B) * k, rng);
    auto b = random_vec(static_cast<std::size_t>(k) * m, rng);
    std::vector<double> out_s(static_cast<std::size_t>(B) * m);
    std::vector<double> out_p(out_s.size());
    const double ts = time_best_of(10, [&] {
      matmul_serial(a.data(), b.data(), out_s.data(), B, k, m, false, false);
    });
    const double tp = time_best_of(10, [&] {
      matmul(a.data(), b.data(), out_p.data(), B, k, m, false, false);
    });
    char label[64];
    std::snprintf(label, sizeof(label), "matmul %dx%dx%d", B, k, m);
    report(label, ts, tp, bitwise_equal(out_s, out_p), &all_equal);
  }

  {
    const int n = 1 << 22;
    auto x = random_vec(n, rng);
    double sum_s = 0, sum_p = 0;
    const double ts =
        time_best_of(5, [&] { sum_s = sum_all_serial(x.data(), n); });
    const double tp = time_best_of(5, [&] { sum_p = sum_all(x.data(), n); });
    report("sum_all (4M)", ts, tp,
           std::memcmp(&sum_s, &sum_p, sizeof(double)) == 0, &all_equal);
  }

  {
    const int r = 4096, c = 1024;
    auto x = random_vec(static_cast<std::size_t>(r) * c, rng);
    std::vector<double> out_s(c), out_p(c);
    const double ts = time_best_of(
        10, [&] { col_sum_serial(x.data(), r, c, out_s.data()); });
    const double tp =
        time_best_of(10, [&] { col_sum(x.data(), r, c, out_p.data()); });
    report("col_sum 4096x1024", ts, tp, bitwise_equal(out_s, out_p),
           &all_equal);
  }

  std::printf("\nserial vs openmp: %s\n", all_equal ? "PASS" : "FAIL");
  return all_equal ? 0 : 1;
}
