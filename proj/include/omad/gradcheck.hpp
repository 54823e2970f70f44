#pragma once

// Central finite-difference check of analytic gradients, in 64-bit precision.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "omad/autodiff.hpp"

namespace omad {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // 0 checks every element; otherwise a seeded random subsample of this size.
  std::size_t sample_size = 0;
  std::uint64_t seed = 0;
  // A probe whose +step or -step evaluation switches any relu or clamp
  // relative to the unperturbed point measures a secant across a kink, not
  // the derivative. Such elements are counted in kink_skipped and, when
  // sampling, replaced by the next element of the random order.
  bool skip_kinks = true;
};

struct GradCheckEntry {
  std::string param;
  std::size_t index = 0;
  double analytic = 0;
  double numeric = 0;
  // |analytic - numeric| / max(1, |analytic|, |numeric|)
  double rel_error = 0;
};

struct GradCheckReport {
  bool passed = true;
  std::size_t checked = 0;
  std::size_t kink_skipped = 0;
  double max_rel_error = 0;
  GradCheckEntry worst;
  std::vector<GradCheckEntry> failures;
};

// A parameter the checker may perturb in place. It restores each element
// after probing it.
struct ParamView {
  std::string name;
  std::span<double> values;
};

// loss() must evaluate the scalar function at the current parameter values.
// analytic must hold a gradient for every parameter in params. Passes when
// at least one element was compared and none exceeded the tolerance.
GradCheckReport finite_diff_check(const std::function<double()>& loss,
                                  const std::vector<ParamView>& params,
                                  const GradMap<double>& analytic, const GradCheckOptions& options);

double relative_error(double analytic, double numeric);

}  // namespace omad
