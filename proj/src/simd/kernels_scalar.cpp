#include "hep/simd/kernels.hpp"

#include <cmath>

namespace hep::simd::scalar {

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * ldc;
    if (!accumulate) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    }
    const double* arow = a + i * lda;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void adam(double* param, const double* grad, double* m, double* v, std::size_t n,
          const AdamStep& s) {
  const double step_size = s.lr / s.bias_correction1;
  const double inv_sqrt_bc2 = 1.0 / std::sqrt(s.bias_correction2);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i] + s.weight_decay * param[i];
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g;
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g * g;
    const double denom = std::sqrt(v[i]) * inv_sqrt_bc2 + s.eps;
    param[i] -= step_size * m[i] / denom;
  }
}

}  // namespace hep::simd::scalar
