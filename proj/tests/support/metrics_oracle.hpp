#pragma once

// Exhaustive threshold sweep used as the reference for the metrics code.
// Deliberately naive: linear counts at every candidate threshold.

#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <vector>

#include "omad/metrics.hpp"

namespace omad::testing {

struct OracleSweep {
  std::vector<double> thresholds;
  std::vector<double> apcer;
  std::vector<double> bpcer;
};

inline OracleSweep oracle_sweep(const std::vector<ScoreRecord>& records) {
  const double inf = std::numeric_limits<double>::infinity();
  std::set<double> scores;
  for (const auto& r : records) scores.insert(r.score);
  std::set<double> cands{-inf, inf};
  double prev = 0;
  bool first = true;
  for (double s : scores) {
    cands.insert(s);
    if (!first) cands.insert(0.5 * (prev + s));
    prev = s;
    first = false;
  }
  OracleSweep out;
  for (double t : cands) {
    std::size_t na = 0, nb = 0, fa = 0, fr = 0;
    for (const auto& r : records) {
      if (r.label == 0) {
        ++na;
        if (r.score >= t) ++fa;
      } else {
        ++nb;
        if (r.score < t) ++fr;
      }
    }
    out.thresholds.push_back(t);
    out.apcer.push_back(static_cast<double>(fa) / static_cast<double>(na));
    out.bpcer.push_back(static_cast<double>(fr) / static_cast<double>(nb));
  }
  return out;
}

inline OperatingPoint oracle_eer(const OracleSweep& s) {
  OperatingPoint best{0, 0};
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < s.thresholds.size(); ++i) {
    const double g = std::abs(s.apcer[i] - s.bpcer[i]);
    if (g < gap) {
      gap = g;
      best = {(s.apcer[i] + s.bpcer[i]) / 2, s.thresholds[i]};
    }
  }
  return best;
}

inline OperatingPoint oracle_bpcer_at(const OracleSweep& s, double target) {
  const double inf = std::numeric_limits<double>::infinity();
  OperatingPoint best{inf, inf};
  for (std::size_t i = 0; i < s.thresholds.size(); ++i) {
    if (s.apcer[i] <= target && s.bpcer[i] < best.rate) best = {s.bpcer[i], s.thresholds[i]};
  }
  return best;
}

// Random score set with both classes present. Scores sit on a coarse grid
// half the time so ties are common.
inline std::vector<ScoreRecord> random_score_records(std::mt19937_64& rng, std::size_t max_size) {
  std::uniform_int_distribution<std::size_t> size_dist(2, max_size);
  const std::size_t n = size_dist(rng);
  const bool grid = rng() % 2 == 0;
  std::uniform_int_distribution<int> grid_dist(0, 20);
  std::uniform_real_distribution<double> real_dist(0.0, 1.0);
  std::vector<ScoreRecord> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].sample_id = "s" + std::to_string(i);
    out[i].label = static_cast<int>(rng() % 2);
    out[i].score = grid ? grid_dist(rng) / 20.0 : real_dist(rng);
  }
  out[0].label = 0;
  out[1].label = 1;
  return out;
}

}  // namespace omad::testing
