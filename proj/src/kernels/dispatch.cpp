#include "dbdiag/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#include "dbdiag/error.hpp"

namespace dbdiag::kernels {

namespace {

constexpr KernelTable kScalar{Isa::Scalar, scalar::axpy, scalar::dot, scalar::sum_sq_diff,
                              scalar::adam_update};
constexpr KernelTable kAvx2{Isa::Avx2, avx2::axpy, avx2::dot, avx2::sum_sq_diff,
                            avx2::adam_update};

const KernelTable* select_default() {
  if (const char* env = std::getenv("DBDIAG_ISA")) {
    const std::string want(env);
    if (want == "scalar") return &kScalar;
    if (want == "avx2" && isa_supported(Isa::Avx2)) return &kAvx2;
  }
  return isa_supported(Isa::Avx2) ? &kAvx2 : &kScalar;
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{select_default()};
  return table;
}

}  // namespace

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return true;
    case Isa::Avx2:
#if defined(DBDIAG_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table(Isa isa) {
  if (!isa_supported(isa)) {
    throw ConfigError("kernel ISA '" + std::string(isa_name(isa)) + "' is not available");
  }
  return isa == Isa::Avx2 ? kAvx2 : kScalar;
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

void set_active(Isa isa) { current().store(&table(isa), std::memory_order_release); }

std::string_view isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

}  // namespace dbdiag::kernels
