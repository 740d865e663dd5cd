#pragma once

#ifdef _OPENMP
#include <omp.h>
#endif

namespace deqn::kernels {

template <class F>
void map1_omp(const double* x, double* y, int n, F f) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) y[i] = f(x[i]);
#else
  map1_serial(x, y, n, f);
#endif
}

template <class F>
void map1(const double* x, double* y, int n, F f) {
  if (n >= parallel_threshold())
    map1_omp(x, y, n, f);
  else
    map1_serial(x, y, n, f);
}

template <class F>
void map2_bcast_omp(const double* a, int ra, int ca, const double* b, int rb,
                    int cb, double* y, int r, int c, F f) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (int i = 0; i < r; ++i) {
    const double* arow = a + (ra == 1 ? 0 : i) * ca;
    const double* brow = b + (rb == 1 ? 0 : i) * cb;
    double* yrow = y + i * c;
    for (int j = 0; j < c; ++j)
      yrow[j] = f(arow[ca == 1 ? 0 : j], brow[cb == 1 ? 0 : j]);
  }
#else
  map2_bcast_serial(a, ra, ca, b, rb, cb, y, r, c, f);
#endif
}

template <class F>
void map2_bcast(const double* a, int ra, int ca, const double* b, int rb,
                int cb, double* y, int r, int c, F f) {
  if (r * c >= parallel_threshold())
    map2_bcast_omp(a, ra, ca, b, rb, cb, y, r, c, f);
  else
    map2_bcast_serial(a, ra, ca, b, rb, cb, y, r, c, f);
}

}  // namespace deqn::kernels
