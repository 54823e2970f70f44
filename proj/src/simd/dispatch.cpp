#include <atomic>

#include "omad/error.hpp"
#include "omad/simd.hpp"

namespace omad::simd {

namespace {

bool supported(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return true;
    case Backend::kAvx2:
#if defined(OMAD_HAVE_AVX2_KERNELS)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::kNeon:
#if defined(OMAD_HAVE_NEON_KERNELS)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Backend detect() {
  if (supported(Backend::kAvx2)) return Backend::kAvx2;
  if (supported(Backend::kNeon)) return Backend::kNeon;
  return Backend::kScalar;
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> backend{detect()};
  return backend;
}

void require_same_length(std::size_t a, std::size_t b) {
  if (a != b) {
    throw DimensionError("simd kernel length mismatch: " + std::to_string(a) + " vs " +
                         std::to_string(b));
  }
}

template <typename Real>
Real dot_dispatch(std::span<const Real> x, std::span<const Real> y) {
  require_same_length(x.size(), y.size());
  switch (current().load(std::memory_order_relaxed)) {
#if defined(OMAD_HAVE_AVX2_KERNELS)
    case Backend::kAvx2:
      return avx2::dot(x.data(), y.data(), x.size());
#endif
#if defined(OMAD_HAVE_NEON_KERNELS)
    case Backend::kNeon:
      return neon::dot(x.data(), y.data(), x.size());
#endif
    default:
      return scalar::dot(x.data(), y.data(), x.size());
  }
}

template <typename Real>
void axpy_dispatch(Real alpha, std::span<const Real> x, std::span<Real> y) {
  require_same_length(x.size(), y.size());
  switch (current().load(std::memory_order_relaxed)) {
#if defined(OMAD_HAVE_AVX2_KERNELS)
    case Backend::kAvx2:
      avx2::axpy(alpha, x.data(), y.data(), x.size());
      return;
#endif
#if defined(OMAD_HAVE_NEON_KERNELS)
    case Backend::kNeon:
      neon::axpy(alpha, x.data(), y.data(), x.size());
      return;
#endif
    default:
      scalar::axpy(alpha, x.data(), y.data(), x.size());
  }
}

}  // namespace

std::string_view backend_name(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
    case Backend::kNeon:
      return "neon";
  }
  return "unknown";
}

std::vector<Backend> available_backends() {
  std::vector<Backend> out;
  for (Backend b : {Backend::kScalar, Backend::kAvx2, Backend::kNeon}) {
    if (supported(b)) out.push_back(b);
  }
  return out;
}

Backend active_backend() { return current().load(); }

void set_backend(Backend backend) {
  if (!supported(backend)) {
    throw ContractError("simd backend not available: " + std::string(backend_name(backend)));
  }
  current().store(backend);
}

float dot(std::span<const float> x, std::span<const float> y) { return dot_dispatch(x, y); }
double dot(std::span<const double> x, std::span<const double> y) { return dot_dispatch(x, y); }
void axpy(float alpha, std::span<const float> x, std::span<float> y) { axpy_dispatch(alpha, x, y); }
void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  axpy_dispatch(alpha, x, y);
}

}  // namespace omad::simd
