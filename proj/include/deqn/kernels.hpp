#pragma once

#include <cstddef>

// Low-level array kernels backing the tape. Every kernel has a serial
// reference implementation (*_serial) and an OpenMP variant; the unsuffixed
// entry points dispatch on element count. Parallel variants assign each
// output element to exactly one thread and keep per-element arithmetic in
// the same order as the serial code, so results are bitwise identical.

namespace deqn::kernels {

// Minimum output elements before the OpenMP path is taken.
int& parallel_threshold();

// Fixed block size for deterministic summation.
inline constexpr int kSumBlock = 1024;

template <class F>
void map1_serial(const double* x, double* y, int n, F f) {
  for (int i = 0; i < n; ++i) y[i] = f(x[i]);
}

template <class F>
void map1_omp(const double* x, double* y, int n, F f);

template <class F>
void map1(const double* x, double* y, int n, F f);

// Elementwise binary with broadcasting. Input shapes (ra,ca) and (rb,cb)
// must each divide the output shape (r,c) in the usual broadcast sense
// (dimension equal or 1).
template <class F>
void map2_bcast_serial(const double* a, int ra, int ca, const double* b,
                       int rb, int cb, double* y, int r, int c, F f) {
  for (int i = 0; i < r; ++i) {
    const double* arow = a + (ra == 1 ? 0 : i) * ca;
    const double* brow = b + (rb == 1 ? 0 : i) * cb;
    double* yrow = y + i * c;
    for (int j = 0; j < c; ++j)
      yrow[j] = f(arow[ca == 1 ? 0 : j], brow[cb == 1 ? 0 : j]);
  }
}

template <class F>
void map2_bcast_omp(const double* a, int ra, int ca, const double* b, int rb,
                    int cb, double* y, int r, int c, F f);

template <class F>
void map2_bcast(const double* a, int ra, int ca, const double* b, int rb,
                int cb, double* y, int r, int c, F f);

// C(M,N) = op(A) * op(B), inner dimension K. ta/tb transpose the stored
// operand. A is stored (ta ? K x M : M x K) row-major, similarly B.
void matmul_serial(const double* A, const double* B, double* C, int M, int K,
                   int N, bool ta, bool tb);
void matmul(const double* A, const double* B, double* C, int M, int K, int N,
            bool ta, bool tb);

// Blocked left-fold sum; block structure is fixed so the result does not
// depend on thread count.
double sum_all_serial(const double* x, int n);
double sum_all(const double* x, int n);

void col_sum_serial(const double* x, int r, int c, double* out);
void col_sum(const double* x, int r, int c, double* out);

void row_sum_serial(const double* x, int r, int c, double* out);
void row_sum(const double* x, int r, int c, double* out);

}  // namespace deqn::kernels

#include "deqn/kernels_impl.hpp"
