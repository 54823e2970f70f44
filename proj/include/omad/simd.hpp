#pragma once

// Vector kernels used by the convolution and dense inner loops.
//
// Every kernel has a portable scalar reference and, where the target allows,
// an AVX2/FMA (x86-64) or NEON (aarch64) variant. The variant is picked once
// at startup from the CPU's reported features; set_backend() overrides it,
// which the equivalence tests use to compare variants against the reference.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace omad::simd {

enum class Backend { kScalar, kAvx2, kNeon };

std::string_view backend_name(Backend backend);

// Backends usable on this machine, scalar first.
std::vector<Backend> available_backends();

Backend active_backend();

// Throws ContractError if the backend is not available.
void set_backend(Backend backend);

// Sum of x[i] * y[i]. Spans must have equal length.
float dot(std::span<const float> x, std::span<const float> y);
double dot(std::span<const double> x, std::span<const double> y);

// y[i] += alpha * x[i].
void axpy(float alpha, std::span<const float> x, std::span<float> y);
void axpy(double alpha, std::span<const double> x, std::span<double> y);

// Raw per-backend entry points, exposed for equivalence testing.
namespace scalar {
float dot(const float* x, const float* y, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define OMAD_HAVE_AVX2_KERNELS 1
namespace avx2 {
float dot(const float* x, const float* y, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace avx2
#endif

#if defined(__aarch64__)
#define OMAD_HAVE_NEON_KERNELS 1
namespace neon {
float dot(const float* x, const float* y, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace neon
#endif

}  // namespace omad::simd
