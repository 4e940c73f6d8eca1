/* Vectorizable elementwise gate math for the GRU kernels. */
#ifndef HAMH_GATE_MATH_H
#define HAMH_GATE_MATH_H
#include <math.h>

static inline void hamh_sigmoid(double *restrict x, long n) {
#pragma omp simd
    for (long i = 0; i < n; i++) x[i] = 0.5 * (tanh(0.5 * x[i]) + 1.0);
}

static inline void hamh_tanh(double *restrict x, long n) {
#pragma omp simd
    for (long i = 0; i < n; i++) x[i] = tanh(x[i]);
}

#endif
