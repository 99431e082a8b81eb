// Compiled with -mavx2 -mfma; only reached after a runtime cpuid check.
#include "hep/simd/kernels.hpp"

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace hep::simd::avx2 {
namespace {

constexpr std::size_t kPanel = 8;  // columns of B per packed panel (2 ymm)

// rows x 8 block of C from a packed k x 8 panel of B.
template <int Rows>
inline void micro_kernel(std::size_t k, const double* a, std::size_t lda, const double* panel,
                         double* out /* Rows x 8, contiguous */) {
  __m256d acc[Rows][2];
  for (int r = 0; r < Rows; ++r) {
    acc[r][0] = _mm256_setzero_pd();
    acc[r][1] = _mm256_setzero_pd();
  }
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(panel + p * kPanel);
    const __m256d b1 = _mm256_loadu_pd(panel + p * kPanel + 4);
    for (int r = 0; r < Rows; ++r) {
      const __m256d av = _mm256_broadcast_sd(a + r * lda + p);
      acc[r][0] = _mm256_fmadd_pd(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_pd(av, b1, acc[r][1]);
    }
  }
  for (int r = 0; r < Rows; ++r) {
    _mm256_storeu_pd(out + r * kPanel, acc[r][0]);
    _mm256_storeu_pd(out + r * kPanel + 4, acc[r][1]);
  }
}

inline void write_block(const double* block, std::size_t rows, std::size_t cols, double* c,
                        std::size_t ldc, bool accumulate) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* crow = c + r * ldc;
    const double* brow = block + r * kPanel;
    if (accumulate) {
      for (std::size_t j = 0; j < cols; ++j) crow[j] += brow[j];
    } else {
      for (std::size_t j = 0; j < cols; ++j) crow[j] = brow[j];
    }
  }
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

}  // namespace

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) {
      for (std::size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, 0.0);
    }
    return;
  }
  constexpr std::size_t kRows = 6;
  thread_local std::vector<double> panel;
  panel.resize(k * kPanel);
  alignas(32) double block[kRows * kPanel];

  for (std::size_t j0 = 0; j0 < n; j0 += kPanel) {
    const std::size_t cols = std::min(kPanel, n - j0);
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * ldb + j0;
      double* dst = panel.data() + p * kPanel;
      std::size_t j = 0;
      for (; j < cols; ++j) dst[j] = brow[j];
      for (; j < kPanel; ++j) dst[j] = 0.0;
    }
    std::size_t i0 = 0;
    for (; i0 + kRows <= m; i0 += kRows) {
      micro_kernel<kRows>(k, a + i0 * lda, lda, panel.data(), block);
      write_block(block, kRows, cols, c + i0 * ldc + j0, ldc, accumulate);
    }
    for (; i0 < m; ++i0) {
      micro_kernel<1>(k, a + i0 * lda, lda, panel.data(), block);
      write_block(block, 1, cols, c + i0 * ldc + j0, ldc, accumulate);
    }
  }
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void adam(double* param, const double* grad, double* m, double* v, std::size_t n,
          const AdamStep& s) {
  const double step_size = s.lr / s.bias_correction1;
  const double inv_sqrt_bc2 = 1.0 / std::sqrt(s.bias_correction2);
  const __m256d b1 = _mm256_set1_pd(s.beta1);
  const __m256d one_m_b1 = _mm256_set1_pd(1.0 - s.beta1);
  const __m256d b2 = _mm256_set1_pd(s.beta2);
  const __m256d one_m_b2 = _mm256_set1_pd(1.0 - s.beta2);
  const __m256d wd = _mm256_set1_pd(s.weight_decay);
  const __m256d eps = _mm256_set1_pd(s.eps);
  const __m256d scale = _mm256_set1_pd(inv_sqrt_bc2);
  const __m256d lr = _mm256_set1_pd(step_size);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d p = _mm256_loadu_pd(param + i);
    const __m256d g = _mm256_fmadd_pd(wd, p, _mm256_loadu_pd(grad + i));
    const __m256d mi = _mm256_fmadd_pd(b1, _mm256_loadu_pd(m + i), _mm256_mul_pd(one_m_b1, g));
    const __m256d vi = _mm256_fmadd_pd(b2, _mm256_loadu_pd(v + i),
                                       _mm256_mul_pd(one_m_b2, _mm256_mul_pd(g, g)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d denom = _mm256_fmadd_pd(_mm256_sqrt_pd(vi), scale, eps);
    p = _mm256_sub_pd(p, _mm256_div_pd(_mm256_mul_pd(lr, mi), denom));
    _mm256_storeu_pd(param + i, p);
  }
  for (; i < n; ++i) {
    const double g = grad[i] + s.weight_decay * param[i];
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g;
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g * g;
    const double denom = std::sqrt(v[i]) * inv_sqrt_bc2 + s.eps;
    param[i] -= step_size * m[i] / denom;
  }
}

}  // namespace hep::simd::avx2
