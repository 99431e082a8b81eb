#include <cstdlib>
#include <cstring>

#include "hep/simd/kernels.hpp"

namespace hep::simd {
namespace {

constexpr KernelTable kScalarTable{Isa::Scalar, scalar::gemm, scalar::dot, scalar::axpy,
                                   scalar::mul, scalar::adam};
#ifdef HEP_SIMD_HAS_AVX2_BUILD
constexpr KernelTable kAvx2Table{Isa::Avx2, avx2::gemm, avx2::dot, avx2::axpy, avx2::mul,
                                 avx2::adam};
#endif

const KernelTable& select_table() {
  const char* forced = std::getenv("HEP_SIMD");
  if (forced != nullptr && std::strcmp(forced, "scalar") == 0) return kScalarTable;
  return kernels_for(Isa::Avx2);
}

}  // namespace

bool cpu_has_avx2() {
#ifdef HEP_SIMD_HAS_AVX2_BUILD
  static const bool has = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return has;
#else
  return false;
#endif
}

const KernelTable& kernels_for(Isa isa) {
#ifdef HEP_SIMD_HAS_AVX2_BUILD
  if (isa == Isa::Avx2 && cpu_has_avx2()) return kAvx2Table;
#endif
  (void)isa;
  return kScalarTable;
}

const KernelTable& active() {
  static const KernelTable& table = select_table();
  return table;
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Avx2:
      return "avx2";
    case Isa::Scalar:
      break;
  }
  return "scalar";
}

}  // namespace hep::simd
