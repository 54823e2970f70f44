#pragma once

// Differentiable operations over Graph variables. Every op validates shapes
// up front and throws DimensionError naming the offending shapes.

#include <cstdint>
#include <optional>
#include <span>

#include "omad/autodiff.hpp"

namespace omad {

enum class Activation { kRelu, kSigmoid };

// While alive, ops with a kink (relu, the probability clamp) fold which side
// of the kink each element lands on into pattern(). Two evaluations with the
// same pattern lie on the same linear piece. One recorder per thread; nesting
// is not supported.
class KinkRecorder {
 public:
  KinkRecorder();
  ~KinkRecorder();
  KinkRecorder(const KinkRecorder&) = delete;
  KinkRecorder& operator=(const KinkRecorder&) = delete;

  std::uint64_t pattern() const { return hash_; }
  void fold(std::uint64_t word);

  static KinkRecorder* active();

 private:
  std::uint64_t hash_ = 0x6b696e6bULL;
};

// Cross-correlation. input is [C_in,H,W] or [N,C_in,H,W]; kernel is
// [C_out,C_in,kH,kW]. Output spatial size is (H + 2*padding - kH)/stride + 1.
template <typename Real>
Var<Real> conv2d(Var<Real> input, Var<Real> kernel, int stride, int padding);

// weight[m,n] * input[n] (+ bias[m]).
template <typename Real>
Var<Real> dense(Var<Real> input, Var<Real> weight, std::optional<Var<Real>> bias = std::nullopt);

template <typename Real>
Var<Real> dense(Var<Real> input, Var<Real> weight, Var<Real> bias) {
  return dense(input, weight, std::optional<Var<Real>>(bias));
}

template <typename Real>
Var<Real> activation(Var<Real> input, Activation kind);

template <typename Real>
Var<Real> relu(Var<Real> input) {
  return activation(input, Activation::kRelu);
}

template <typename Real>
Var<Real> sigmoid(Var<Real> input) {
  return activation(input, Activation::kSigmoid);
}

// [C,H,W] -> [C], per-channel mean.
template <typename Real>
Var<Real> global_avg_pool(Var<Real> input);

// Rank-1 [p] and [q] -> [p+q].
template <typename Real>
Var<Real> concat(Var<Real> a, Var<Real> b);

// Rank-1 [n] x [n] -> scalar.
template <typename Real>
Var<Real> inner_product(Var<Real> a, Var<Real> b);

// Cosine of the angle between two rank-1 vectors; 0 if either norm is 0.
template <typename Real>
Var<Real> cosine(Var<Real> a, Var<Real> b);

// Elementwise sum of equal shapes.
template <typename Real>
Var<Real> add(Var<Real> a, Var<Real> b);

// Residual shortcut: a[C_a,H,W] + b[C_b,H,W] with b zero-padded along the
// channel axis (C_b <= C_a).
template <typename Real>
Var<Real> add_channel_padded(Var<Real> a, Var<Real> b);

// Elementwise product of equal shapes.
template <typename Real>
Var<Real> mul(Var<Real> a, Var<Real> b);

template <typename Real>
Var<Real> scale(Var<Real> a, Real factor);

template <typename Real>
Var<Real> square(Var<Real> a);

// Sum of all elements -> scalar.
template <typename Real>
Var<Real> sum(Var<Real> a);

// Arithmetic mean of scalar variables.
template <typename Real>
Var<Real> mean(std::span<const Var<Real>> scalars);

// Lower and upper clamp applied to probabilities before the logarithms.
inline constexpr double kProbClamp = 1e-7;

// -(y log p + (1-y) log(1-p)) for a scalar probability p, with p clamped into
// [kProbClamp, 1 - kProbClamp]. label must be 0 or 1.
template <typename Real>
Var<Real> binary_cross_entropy(Var<Real> probability, int label);

}  // namespace omad
