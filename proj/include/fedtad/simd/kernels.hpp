#pragma once

// Dense double-precision vector kernels with a scalar reference and an AVX2/FMA
// variant. The variant is picked once at startup from CPUID; tests can pin an
// ISA to compare the two.

#include <cstddef>
#include <string_view>

namespace fedtad::simd {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;
  /// y[i] += a * x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  /// sum x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  /// x[i] *= a
  void (*scal)(double a, double* x, std::size_t n);
  /// y[i] = a * x[i] + b * y[i]
  void (*axpby)(double a, const double* x, double b, double* y, std::size_t n);
};

namespace scalar {
void axpy(double a, const double* x, double* y, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
void scal(double a, double* x, std::size_t n);
void axpby(double a, const double* x, double b, double* y, std::size_t n);
}  // namespace scalar

#if defined(FEDTAD_HAVE_AVX2)
namespace avx2 {
void axpy(double a, const double* x, double* y, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
void scal(double a, double* x, std::size_t n);
void axpby(double a, const double* x, double b, double* y, std::size_t n);
}  // namespace avx2
#endif

/// Best ISA this binary was built with and the CPU supports.
Isa detected_isa();

/// True if `isa` can run here.
bool isa_available(Isa isa);

const KernelTable& table(Isa isa);

/// The table every dense routine dispatches through.
const KernelTable& kernels();

/// Pins the active table (tests, `FEDTAD_SIMD=scalar`). Not thread-safe; call before work starts.
void set_active_isa(Isa isa);

}  // namespace fedtad::simd
