#include "omad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"
#include "omad/error.hpp"
#include "omad/text.hpp"

namespace omad {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Number of sorted values >= t.
std::size_t count_at_or_above(const std::vector<double>& sorted, double t) {
  return static_cast<std::size_t>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), t));
}

ErrorRates rates(const ScoreSet& s, double t) {
  const std::size_t na = s.n_attack(), nb = s.n_bona_fide();
  const std::size_t attacks_accepted = count_at_or_above(s.attack_scores(), t);
  const std::size_t bona_rejected = nb - count_at_or_above(s.bona_fide_scores(), t);
  return {static_cast<double>(attacks_accepted) / static_cast<double>(na),
          static_cast<double>(bona_rejected) / static_cast<double>(nb)};
}

nlohmann::json threshold_json(double t) {
  if (std::isinf(t)) return t > 0 ? "inf" : "-inf";
  return t;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  return out;
}

}  // namespace

ScoreSet::ScoreSet(std::vector<ScoreRecord> records) : records_(std::move(records)) {
  for (const auto& r : records_) {
    if (r.label != 0 && r.label != 1) {
      throw ContractError("score record " + r.sample_id + ": label must be 0 or 1, got " + std::to_string(r.label));
    }
    if (!std::isfinite(r.score)) throw ContractError("score record " + r.sample_id + ": score is not finite");
    (r.label == 1 ? bona_ : attack_).push_back(r.score);
  }
  std::sort(attack_.begin(), attack_.end());
  std::sort(bona_.begin(), bona_.end());
}

void ScoreSet::require_both_classes() const {
  if (attack_.empty() || bona_.empty()) {
    throw ContractError("error rates need at least one attack and one bona fide score (have " +
                        std::to_string(attack_.size()) + " attacks, " + std::to_string(bona_.size()) +
                        " bona fide)");
  }
}

ErrorRates apcer_bpcer_at(const ScoreSet& scores, double threshold) {
  scores.require_both_classes();
  return rates(scores, threshold);
}

std::vector<double> candidate_thresholds(const ScoreSet& scores) {
  std::vector<double> values;
  values.reserve(scores.records().size());
  for (const auto& r : scores.records()) values.push_back(r.score);
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());

  std::vector<double> out;
  out.reserve(2 * values.size() + 2);
  out.push_back(-kInf);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out.push_back(0.5 * (values[i - 1] + values[i]));
    out.push_back(values[i]);
  }
  out.push_back(kInf);
  // Midpoints of adjacent doubles can round onto an endpoint.
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

OperatingPoint eer(const ScoreSet& scores) {
  scores.require_both_classes();
  OperatingPoint best{0, 0};
  double best_gap = kInf;
  for (double t : candidate_thresholds(scores)) {
    const ErrorRates r = rates(scores, t);
    const double gap = std::abs(r.apcer - r.bpcer);
    if (gap < best_gap) {
      best_gap = gap;
      best = {(r.apcer + r.bpcer) / 2, t};
    }
  }
  return best;
}

OperatingPoint bpcer_at_apcer(const ScoreSet& scores, double target) {
  scores.require_both_classes();
  if (!(target > 0.0 && target < 1.0)) throw ContractError("APCER target must lie in (0,1)");
  OperatingPoint best{kInf, kInf};
  for (double t : candidate_thresholds(scores)) {
    const ErrorRates r = rates(scores, t);
    if (r.apcer <= target && r.bpcer < best.rate) best = {r.bpcer, t};
  }
  return best;
}

std::vector<DetPoint> det_curve(const ScoreSet& scores) {
  scores.require_both_classes();
  std::vector<DetPoint> out;
  for (double t : candidate_thresholds(scores)) {
    const ErrorRates r = rates(scores, t);
    out.push_back({t, r.apcer, r.bpcer});
  }
  return out;
}

MetricsReport compute_report(const ScoreSet& scores) {
  MetricsReport report;
  const OperatingPoint e = eer(scores);
  report.eer = e.rate;
  report.eer_threshold = e.threshold;
  for (double target : kApcerTargets) {
    char key[16];
    std::snprintf(key, sizeof(key), "%.2f", target);
    report.bpcer_at_apcer.push_back({target, key, bpcer_at_apcer(scores, target)});
  }
  report.det_points = det_curve(scores);
  report.n_attack = scores.n_attack();
  report.n_bona_fide = scores.n_bona_fide();
  return report;
}

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f%%", 100.0 * fraction);
  return buf;
}

std::string format_summary(const MetricsReport& report) {
  std::string out = "EER " + format_percent(report.eer);
  for (const auto& r : report.bpcer_at_apcer) {
    char target[16];
    std::snprintf(target, sizeof(target), "%g%%", 100.0 * r.target);
    out += "  BPCER@APCER=" + std::string(target) + " " + format_percent(r.point.rate);
  }
  return out;
}

void write_scores_csv(const std::filesystem::path& path, const ScoreSet& scores) {
  std::ofstream out = open_out(path);
  out << "sample_id,label,score\n";
  for (const auto& r : scores.records()) {
    if (r.sample_id.find_first_of(",\n\r") != std::string::npos) {
      throw ContractError("sample_id contains a CSV delimiter: " + r.sample_id);
    }
    out << r.sample_id << "," << r.label << "," << shortest_double(r.score) << "\n";
  }
  if (!out) throw IoError("failed writing " + path.string());
}

ScoreSet read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open score file: " + path.string());
  std::string line;
  std::size_t line_no = 1;
  auto fail = [&](const std::string& what) -> FormatError {
    return FormatError(path.filename().string() + " line " + std::to_string(line_no) + ": " + what);
  };
  if (!std::getline(in, line)) throw fail("empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "sample_id,label,score") throw fail("expected header 'sample_id,label,score'");

  std::vector<ScoreRecord> records;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos) throw fail("expected 3 fields");
    ScoreRecord r;
    r.sample_id = line.substr(0, c1);
    if (r.sample_id.empty()) throw fail("empty sample_id");
    const std::string label = line.substr(c1 + 1, c2 - c1 - 1);
    if (label != "0" && label != "1") throw fail("label must be 0 or 1");
    r.label = label == "1" ? 1 : 0;
    const std::string score = line.substr(c2 + 1);
    if (!parse_double(score, r.score) || !std::isfinite(r.score)) {
      throw fail("bad score '" + score + "'");
    }
    if (!seen.insert(r.sample_id).second) throw fail("duplicate sample_id " + r.sample_id);
    records.push_back(std::move(r));
  }
  return ScoreSet(std::move(records));
}

std::string report_to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["eer"] = report.eer;
  j["eer_threshold"] = threshold_json(report.eer_threshold);
  nlohmann::ordered_json at = nlohmann::ordered_json::object();
  for (const auto& r : report.bpcer_at_apcer) {
    at[r.key] = {{"bpcer", r.point.rate}, {"threshold", threshold_json(r.point.threshold)}};
  }
  j["bpcer_at_apcer"] = at;
  j["counts"] = {{"attack", report.n_attack},
                 {"bona_fide", report.n_bona_fide},
                 {"total", report.n_attack + report.n_bona_fide}};
  j["summary"] = format_summary(report);
  return j.dump(2) + "\n";
}

void write_report_json(const std::filesystem::path& path, const MetricsReport& report) {
  std::ofstream out = open_out(path);
  out << report_to_json(report);
  if (!out) throw IoError("failed writing " + path.string());
}

void write_det_csv(const std::filesystem::path& path, const std::vector<DetPoint>& points) {
  std::ofstream out = open_out(path);
  out << "threshold,apcer,bpcer\n";
  for (const auto& p : points) {
    out << shortest_double(p.threshold) << "," << shortest_double(p.apcer) << "," << shortest_double(p.bpcer) << "\n";
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace omad
