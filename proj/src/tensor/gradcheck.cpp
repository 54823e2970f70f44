#include "omad/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "omad/ops.hpp"
#include "omad/rng.hpp"

namespace omad {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport finite_diff_check(const std::function<double()>& loss,
                                  const std::vector<ParamView>& params,
                                  const GradMap<double>& analytic, const GradCheckOptions& options) {
  if (!(options.step > 0)) throw ContractError("finite_diff_check: step must be positive");

  struct Slot {
    std::size_t param;
    std::size_t index;
  };
  std::vector<Slot> slots;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto it = analytic.find(params[p].name);
    if (it == analytic.end() || it->second.size() != params[p].values.size()) {
      throw ContractError("finite_diff_check: no matching analytic gradient for " + params[p].name);
    }
    for (std::size_t i = 0; i < params[p].values.size(); ++i) slots.push_back({p, i});
  }

  const std::size_t target =
      options.sample_size == 0 ? slots.size() : std::min(options.sample_size, slots.size());
  const bool sampled = options.sample_size != 0;
  CounterRng rng(options.seed, RngPurpose::kSubsample);

  // Loss plus the kink pattern of the evaluation.
  auto evaluate = [&](std::uint64_t& pattern) {
    if (!options.skip_kinks) return loss();
    KinkRecorder recorder;
    const double value = loss();
    pattern = recorder.pattern();
    return value;
  };
  std::uint64_t base_pattern = 0;
  if (options.skip_kinks) evaluate(base_pattern);

  GradCheckReport report;
  for (std::size_t i = 0; i < slots.size() && report.checked < target; ++i) {
    if (sampled) {
      // Lazy Fisher-Yates: slot i is drawn from the slots not yet visited.
      const std::size_t j = i + static_cast<std::size_t>(rng.below(i, slots.size() - i));
      std::swap(slots[i], slots[j]);
    }
    const Slot s = slots[i];
    const ParamView& view = params[s.param];
    double& x = view.values[s.index];
    const double saved = x;
    std::uint64_t up_pattern = 0, down_pattern = 0;
    x = saved + options.step;
    const double up = evaluate(up_pattern);
    x = saved - options.step;
    const double down = evaluate(down_pattern);
    x = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_check: non-finite loss while probing " + view.name + "[" +
                         std::to_string(s.index) + "]");
    }
    if (options.skip_kinks && (up_pattern != base_pattern || down_pattern != base_pattern)) {
      ++report.kink_skipped;
      continue;
    }
    GradCheckEntry entry;
    entry.param = view.name;
    entry.index = s.index;
    entry.analytic = analytic.at(view.name)[s.index];
    entry.numeric = (up - down) / (2.0 * options.step);
    entry.rel_error = relative_error(entry.analytic, entry.numeric);
    ++report.checked;
    if (report.checked == 1 || entry.rel_error > report.max_rel_error) {
      report.max_rel_error = entry.rel_error;
      report.worst = entry;
    }
    if (!(entry.rel_error < options.tolerance)) {
      report.passed = false;
      report.failures.push_back(entry);
    }
  }
  if (report.checked == 0 && !slots.empty()) report.passed = false;
  return report;
}

}  // namespace omad
