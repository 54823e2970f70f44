#include <random>

#include "doctest.h"
#include "omad/error.hpp"
#include "omad/simd.hpp"
#include "test_util.hpp"

using namespace omad;

namespace {

// Every non-scalar backend against the scalar reference, across lengths that
// straddle the vector widths and the unrolled main loops.
constexpr std::size_t kLengths[] = {0, 1, 3, 4, 7, 8, 9, 15, 16, 17, 31, 32, 33, 72, 288, 1000, 4096};

template <typename Real>
Real dot_via(simd::Backend b, const std::vector<Real>& x, const std::vector<Real>& y) {
  simd::set_backend(b);
  return simd::dot(std::span<const Real>(x), std::span<const Real>(y));
}

struct BackendGuard {
  simd::Backend saved = simd::active_backend();
  ~BackendGuard() { simd::set_backend(saved); }
};

}  // namespace

TEST_CASE("scalar backend is always available and listed first") {
  auto backends = simd::available_backends();
  REQUIRE(!backends.empty());
  CHECK(backends.front() == simd::Backend::kScalar);
}

TEST_CASE_TEMPLATE("dot: every backend matches the scalar reference", Real, float, double) {
  BackendGuard guard;
  std::mt19937_64 rng(17);
  const double tol = sizeof(Real) == 4 ? 1e-5 : 1e-13;
  for (std::size_t n : kLengths) {
    auto x = testing::random_vector<Real>(rng, n);
    auto y = testing::random_vector<Real>(rng, n);
    double exact = 0;
    double magnitude = 0;
    for (std::size_t i = 0; i < n; ++i) {
      exact += static_cast<double>(x[i]) * static_cast<double>(y[i]);
      magnitude += std::abs(static_cast<double>(x[i]) * static_cast<double>(y[i]));
    }
    for (simd::Backend b : simd::available_backends()) {
      CAPTURE(simd::backend_name(b));
      CAPTURE(n);
      const Real got = dot_via(b, x, y);
      CHECK(std::abs(static_cast<double>(got) - exact) <= tol * std::max(1.0, magnitude));
    }
  }
}

TEST_CASE_TEMPLATE("axpy: every backend matches the scalar reference", Real, float, double) {
  BackendGuard guard;
  std::mt19937_64 rng(29);
  const double tol = sizeof(Real) == 4 ? 1e-6 : 1e-15;
  for (std::size_t n : kLengths) {
    auto x = testing::random_vector<Real>(rng, n);
    auto y0 = testing::random_vector<Real>(rng, n);
    const Real alpha = static_cast<Real>(0.37);
    std::vector<Real> ref = y0;
    simd::scalar::axpy(alpha, x.data(), ref.data(), n);
    for (simd::Backend b : simd::available_backends()) {
      CAPTURE(simd::backend_name(b));
      CAPTURE(n);
      simd::set_backend(b);
      std::vector<Real> y = y0;
      simd::axpy(alpha, std::span<const Real>(x), std::span<Real>(y));
      for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(y[i] - ref[i]) <= tol * 4);
    }
  }
}

TEST_CASE("kernels reject mismatched lengths") {
  std::vector<float> a(4), b(5);
  CHECK_THROWS_AS(simd::dot(std::span<const float>(a), std::span<const float>(b)), DimensionError);
  CHECK_THROWS_AS(simd::axpy(1.0f, std::span<const float>(a), std::span<float>(b)), DimensionError);
}

TEST_CASE("dispatch is deterministic for a fixed backend") {
  std::mt19937_64 rng(3);
  auto x = testing::random_vector<float>(rng, 777);
  auto y = testing::random_vector<float>(rng, 777);
  const float first = simd::dot(std::span<const float>(x), std::span<const float>(y));
  const float second = simd::dot(std::span<const float>(x), std::span<const float>(y));
  CHECK(first == second);
}
