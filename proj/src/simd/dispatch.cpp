#include <atomic>
#include <cstdlib>
#include <string>

#include "qctrl/simd.hpp"

namespace qctrl::simd {

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::scalar:
      return "scalar";
    case Backend::avx2:
      return "avx2";
  }
  return "unknown";
}

bool available(Backend b) {
  switch (b) {
    case Backend::scalar:
      return true;
    case Backend::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return detail::avx2_kernels() != nullptr && __builtin_cpu_supports("avx2");
#else
      return false;
#endif
  }
  return false;
}

const Kernels& kernels_for(Backend b) {
  if (!available(b)) throw Error("SIMD backend not available: " + std::string(backend_name(b)));
  if (b == Backend::avx2) return *detail::avx2_kernels();
  return detail::scalar_kernels();
}

namespace {

Backend initial_backend() {
  if (const char* env = std::getenv("QCTRL_SIMD")) {
    const std::string v = env;
    if (v == "scalar") return Backend::scalar;
    if (v == "avx2" && available(Backend::avx2)) return Backend::avx2;
  }
  return available(Backend::avx2) ? Backend::avx2 : Backend::scalar;
}

std::atomic<const Kernels*>& active_slot() {
  static std::atomic<const Kernels*> slot{&kernels_for(initial_backend())};
  return slot;
}

}  // namespace

const Kernels& kernels() { return *active_slot().load(std::memory_order_acquire); }

Backend active_backend() { return kernels().backend; }

void select(Backend b) { active_slot().store(&kernels_for(b), std::memory_order_release); }

}  // namespace qctrl::simd
