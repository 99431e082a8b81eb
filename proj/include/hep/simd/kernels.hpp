#pragma once

// Data-parallel inner loops used by the tensor library.
//
// Every kernel has a portable scalar reference and, where the CPU supports
// it, an AVX2+FMA variant. The variant is chosen once at startup from cpuid;
// setting HEP_SIMD=scalar in the environment forces the reference path.
// Results of the two paths agree to rounding (FMA contracts a*b+c), not
// bitwise, so a given process always uses one path for determinism.

#include <cstddef>
#include <string_view>

namespace hep::simd {

enum class Isa { Scalar, Avx2 };

// Dense row-major GEMM:  C[M,N] = beta*C + A[M,K] * B[K,N]  with beta in {0,1}.
// Leading dimensions are in elements.
using GemmFn = void (*)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                        std::size_t lda, const double* b, std::size_t ldb, double* c,
                        std::size_t ldc, bool accumulate);
using DotFn = double (*)(const double* a, const double* b, std::size_t n);
// y += alpha * x
using AxpyFn = void (*)(double alpha, const double* x, double* y, std::size_t n);
// out = a * b (elementwise)
using MulFn = void (*)(const double* a, const double* b, double* out, std::size_t n);

struct AdamStep {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double weight_decay;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
};
// One Adam update with L2-style weight decay folded into the gradient.
using AdamFn = void (*)(double* param, const double* grad, double* m, double* v,
                        std::size_t n, const AdamStep& step);

struct KernelTable {
  Isa isa;
  GemmFn gemm;
  DotFn dot;
  AxpyFn axpy;
  MulFn mul;
  AdamFn adam;
};

// Table for a specific ISA. Requesting Avx2 on a CPU without it returns the
// scalar table.
const KernelTable& kernels_for(Isa isa);

// Active table (selected once, process-wide).
const KernelTable& active();

bool cpu_has_avx2();
std::string_view isa_name(Isa isa);

namespace scalar {
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate);
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void adam(double* param, const double* grad, double* m, double* v, std::size_t n,
          const AdamStep& step);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define HEP_SIMD_HAS_AVX2_BUILD 1
namespace avx2 {
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate);
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void adam(double* param, const double* grad, double* m, double* v, std::size_t n,
          const AdamStep& step);
}  // namespace avx2
#endif

}  // namespace hep::simd
