#pragma once

// Presentation attack detection error rates.
//
// A score at or above the threshold is classified bona fide (label 1). APCER
// is the fraction of attacks (label 0) classified bona fide, BPCER the
// fraction of bona fide samples classified as attacks. All rates are exact
// counts over the candidate thresholds: every distinct score, the midpoint
// of each pair of adjacent distinct scores, and -inf / +inf.

#include <filesystem>
#include <string>
#include <vector>

namespace omad {

struct ScoreRecord {
  std::string sample_id;
  int label = 0;
  double score = 0;
};

class ScoreSet {
 public:
  ScoreSet() = default;
  // Throws ContractError for labels outside {0,1} or non-finite scores.
  explicit ScoreSet(std::vector<ScoreRecord> records);

  const std::vector<ScoreRecord>& records() const { return records_; }
  std::size_t n_attack() const { return attack_.size(); }
  std::size_t n_bona_fide() const { return bona_.size(); }
  // Sorted ascending.
  const std::vector<double>& attack_scores() const { return attack_; }
  const std::vector<double>& bona_fide_scores() const { return bona_; }

  // Throws ContractError unless both classes are present.
  void require_both_classes() const;

 private:
  std::vector<ScoreRecord> records_;
  std::vector<double> attack_;
  std::vector<double> bona_;
};

struct ErrorRates {
  double apcer = 0;
  double bpcer = 0;
};

struct OperatingPoint {
  double rate = 0;
  double threshold = 0;
};

struct DetPoint {
  double threshold = 0;
  double apcer = 0;
  double bpcer = 0;
};

ErrorRates apcer_bpcer_at(const ScoreSet& scores, double threshold);

// Ascending, duplicates removed, with -inf first and +inf last.
std::vector<double> candidate_thresholds(const ScoreSet& scores);

// Threshold minimising |apcer - bpcer| (smallest on ties); rate is the mean
// of the two there.
OperatingPoint eer(const ScoreSet& scores);

// Lowest BPCER over thresholds whose APCER does not exceed target, at the
// smallest such threshold. target must lie in (0,1).
OperatingPoint bpcer_at_apcer(const ScoreSet& scores, double target);

// One point per candidate threshold, ascending by threshold.
std::vector<DetPoint> det_curve(const ScoreSet& scores);

inline constexpr double kApcerTargets[] = {0.01, 0.20};

struct ApcerTargetResult {
  double target = 0;
  std::string key;  // "0.01", "0.20"
  OperatingPoint point;
};

struct MetricsReport {
  double eer = 0;
  double eer_threshold = 0;
  std::vector<ApcerTargetResult> bpcer_at_apcer;
  std::vector<DetPoint> det_points;
  std::size_t n_attack = 0;
  std::size_t n_bona_fide = 0;
};

MetricsReport compute_report(const ScoreSet& scores);

// "12.34%" from 0.1234.
std::string format_percent(double fraction);
// One line: EER and BPCER at each APCER target, as percentages.
std::string format_summary(const MetricsReport& report);

// CSV "sample_id,label,score". Scores are written in shortest round-trip form.
void write_scores_csv(const std::filesystem::path& path, const ScoreSet& scores);
// Throws IoError, or FormatError naming the line number.
ScoreSet read_scores_csv(const std::filesystem::path& path);

// Infinite thresholds are written as the strings "inf" / "-inf".
std::string report_to_json(const MetricsReport& report);
void write_report_json(const std::filesystem::path& path, const MetricsReport& report);

// CSV "threshold,apcer,bpcer".
void write_det_csv(const std::filesystem::path& path, const std::vector<DetPoint>& points);

}  // namespace omad
