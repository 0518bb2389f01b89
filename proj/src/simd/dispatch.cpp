#include <atomic>
#include <stdexcept>
#include <string>

#include "vstorm/simd/kernels.hpp"

namespace vstorm::simd {
namespace {

bool cpu_has_avx2() {
#if (defined(__x86_64__) || defined(_M_X64)) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

std::atomic<const KernelTable*>& active() {
  static std::atomic<const KernelTable*> table{&simd::table(best_backend())};
  return table;
}

}  // namespace

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    case Backend::neon: return "neon";
  }
  return "unknown";
}

bool backend_available(Backend b) {
  switch (b) {
    case Backend::scalar: return true;
    case Backend::avx2: return detail::avx2_table() != nullptr && cpu_has_avx2();
    case Backend::neon: return detail::neon_table() != nullptr;
  }
  return false;
}

Backend best_backend() {
  if (backend_available(Backend::avx2)) return Backend::avx2;
  if (backend_available(Backend::neon)) return Backend::neon;
  return Backend::scalar;
}

const KernelTable& table(Backend b) {
  if (!backend_available(b))
    throw std::invalid_argument("simd backend not available: " + std::string(backend_name(b)));
  switch (b) {
    case Backend::avx2: return *detail::avx2_table();
    case Backend::neon: return *detail::neon_table();
    case Backend::scalar: break;
  }
  return detail::scalar_table();
}

const KernelTable& kernels() { return *active().load(std::memory_order_relaxed); }

void select_backend(Backend b) { active().store(&table(b), std::memory_order_relaxed); }

}  // namespace vstorm::simd
