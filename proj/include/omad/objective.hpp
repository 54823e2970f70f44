#pragma once

// Training objective: mean binary cross-entropy of the bona fide score plus
// alpha times the mean squared inner product of the two identity vectors.

#include <span>
#include <vector>

#include "omad/gradcheck.hpp"
#include "omad/model.hpp"

namespace omad {

inline constexpr double kDefaultAlpha = 100.0;

struct ObjectiveConfig {
  double alpha = kDefaultAlpha;
  // Replace the inner product with the cosine of the two vectors.
  bool normalize_reg = false;
};

struct LossBreakdown {
  double bce = 0;
  double reg = 0;
  double alpha = 0;
  double total = 0;
};

// (z1 . z2)^2, or cos(z1, z2)^2 when normalized.
template <typename Real>
Var<Real> reg_term(Var<Real> z1, Var<Real> z2, bool normalized = false);

// Value-level reg_term on plain vectors (runs the same graph op).
template <typename Real>
Real reg_term(std::span<const Real> z1, std::span<const Real> z2, bool normalized = false);

// Per-sample cross-entropy; label 1 = bona fide, 0 = attack.
template <typename Real>
Var<Real> bce(Var<Real> probability, int label);

template <typename Real>
struct LossGraph {
  Var<Real> bce;    // batch mean
  Var<Real> reg;    // batch mean
  Var<Real> total;  // bce + alpha * reg
  LossBreakdown values;
};

// Throws ContractError on an empty batch or mismatched label count.
template <typename Real>
LossGraph<Real> total_loss(std::span<const Prediction<Real>> predictions, std::span<const int> labels,
                           const ObjectiveConfig& config);

// Builds the full objective on a fresh 64-bit graph for a fixed batch and
// compares its gradients with central finite differences.
GradCheckReport check_loss_gradients(ModelParams<double>& params,
                                     std::span<const Tensor<double>> images,
                                     std::span<const int> labels, const ObjectiveConfig& objective,
                                     const GradCheckOptions& options);

// Loss value and analytic gradients for a fixed batch on a fresh graph.
template <typename Real>
std::pair<LossBreakdown, GradMap<Real>> loss_and_gradients(const ModelParams<Real>& params,
                                                           std::span<const Tensor<Real>> images,
                                                           std::span<const int> labels,
                                                           const ObjectiveConfig& objective);

}  // namespace omad
