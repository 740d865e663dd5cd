#include "deqn/kernels.hpp"

#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace deqn::kernels {

int& parallel_threshold() {
  static int threshold = 16384;
  return threshold;
}

namespace {

inline double dot_stride(const double* a, int sa, const double* b, int sb,
                         int k) {
  double acc = 0.0;
  for (int i = 0; i < k; ++i) acc += a[i * sa] * b[i * sb];
  return acc;
}

inline void matmul_rows(const double* A, const double* B, double* C, int M,
                        int K, int N, bool ta, bool tb, int m0, int m1) {
  // A stored (ta ? KxM : MxK), B stored (tb ? NxK : KxN), both row-major.
  for (int m = m0; m < m1; ++m) {
    const double* arow = ta ? A + m : A + m * K;
    const int astride = ta ? M : 1;
    for (int n = 0; n < N; ++n) {
      const double* bcol = tb ? B + n * K : B + n;
      const int bstride = tb ? 1 : N;
      C[m * N + n] = dot_stride(arow, astride, bcol, bstride, K);
    }
  }
}

inline double sum_blocked(const double* x, int n) {
  double total = 0.0;
  for (int b = 0; b < n; b += kSumBlock) {
    const int e = b + kSumBlock < n ? b + kSumBlock : n;
    double part = 0.0;
    for (int i = b; i < e; ++i) part += x[i];
    total += part;
  }
  return total;
}

}  // namespace

void matmul_serial(const double* A, const double* B, double* C, int M, int K,
                   int N, bool ta, bool tb) {
  matmul_rows(A, B, C, M, K, N, ta, tb, 0, M);
}

void matmul(const double* A, const double* B, double* C, int M, int K, int N,
            bool ta, bool tb) {
#ifdef _OPENMP
  if (static_cast<long long>(M) * K * N >= parallel_threshold()) {
#pragma omp parallel
    {
      const int nt = omp_get_num_threads();
      const int id = omp_get_thread_num();
      const int chunk = (M + nt - 1) / nt;
      const int m0 = id * chunk;
      const int m1 = m0 + chunk < M ? m0 + chunk : M;
      if (m0 < m1) matmul_rows(A, B, C, M, K, N, ta, tb, m0, m1);
    }
    return;
  }
#endif
  matmul_serial(A, B, C, M, K, N, ta, tb);
}

double sum_all_serial(const double* x, int n) { return sum_blocked(x, n); }

double sum_all(const double* x, int n) {
#ifdef _OPENMP
  if (n >= parallel_threshold()) {
    const int nblocks = (n + kSumBlock - 1) / kSumBlock;
    std::vector<double> parts(nblocks);
#pragma omp parallel for schedule(static)
    for (int b = 0; b < nblocks; ++b) {
      const int i0 = b * kSumBlock;
      const int i1 = i0 + kSumBlock < n ? i0 + kSumBlock : n;
      double part = 0.0;
      for (int i = i0; i < i1; ++i) part += x[i];
      parts[b] = part;
    }
    double total = 0.0;
    for (int b = 0; b < nblocks; ++b) total += parts[b];
    return total;
  }
#endif
  return sum_all_serial(x, n);
}

void col_sum_serial(const double* x, int r, int c, double* out) {
  for (int j = 0; j < c; ++j) {
    double acc = 0.0;
    for (int i = 0; i < r; ++i) acc += x[i * c + j];
    out[j] = acc;
  }
}

void col_sum(const double* x, int r, int c, double* out) {
#ifdef _OPENMP
  if (r * c >= parallel_threshold() && c > 1) {
#pragma omp parallel for schedule(static)
    for (int j = 0; j < c; ++j) {
      double acc = 0.0;
      for (int i = 0; i < r; ++i) acc += x[i * c + j];
      out[j] = acc;
    }
    return;
  }
#endif
  col_sum_serial(x, r, c, out);
}

void row_sum_serial(const double* x, int r, int c, double* out) {
  for (int i = 0; i < r; ++i) {
    double acc = 0.0;
    for (int j = 0; j < c; ++j) acc += x[i * c + j];
    out[i] = acc;
  }
}

void row_sum(const double* x, int r, int c, double* out) {
#ifdef _OPENMP
  if (r * c >= parallel_threshold()) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < r; ++i) {
      double acc = 0.0;
      for (int j = 0; j < c; ++j) acc += x[i * c + j];
      out[i] = acc;
    }
    return;
  }
#endif
  row_sum_serial(x, r, c, out);
}

}  // namespace deqn::kernels
