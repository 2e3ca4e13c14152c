#include <cstdlib>
#include <string>

#include "fedtad/errors.hpp"
#include "fedtad/simd/kernels.hpp"

namespace fedtad::simd {
namespace {

constexpr KernelTable kScalar{Isa::scalar, &scalar::axpy, &scalar::dot, &scalar::scal, &scalar::axpby};
#if defined(FEDTAD_HAVE_AVX2)
constexpr KernelTable kAvx2{Isa::avx2, &avx2::axpy, &avx2::dot, &avx2::scal, &avx2::axpby};
#endif

const KernelTable* initial_table() {
  if (const char* env = std::getenv("FEDTAD_SIMD"); env && std::string(env) == "scalar") return &kScalar;
  return &table(detected_isa());
}

const KernelTable*& active() {
  static const KernelTable* current = initial_table();
  return current;
}

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

Isa detected_isa() {
#if defined(FEDTAD_HAVE_AVX2)
  static const bool has = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  if (has) return Isa::avx2;
#endif
  return Isa::scalar;
}

bool isa_available(Isa isa) { return isa == Isa::scalar || detected_isa() == Isa::avx2; }

const KernelTable& table(Isa isa) {
#if defined(FEDTAD_HAVE_AVX2)
  if (isa == Isa::avx2) {
    if (!isa_available(isa)) throw Error("avx2 kernels requested but the CPU lacks AVX2/FMA");
    return kAvx2;
  }
#else
  if (isa == Isa::avx2) throw Error("avx2 kernels not compiled into this build");
#endif
  return kScalar;
}

const KernelTable& kernels() { return *active(); }

void set_active_isa(Isa isa) { active() = &table(isa); }

}  // namespace fedtad::simd
