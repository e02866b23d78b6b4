#pragma once

// Shewhart-style control charts over anomaly-score series and the merge of
// out-of-control windows into ranked anomaly periods.

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dbdiag/data.hpp"
#include "dbdiag/detector.hpp"

namespace dbdiag::spc {

enum class ChartRule { ThreeSigma, TwoSigmaWarning, Custom };
std::string_view rule_name(ChartRule rule);

struct ControlChart {
  std::string feature;
  double center = 0;
  double sigma = 0;
  double k = 3;
  double ucl = 0;
  double lcl = 0;
  ChartRule rule = ChartRule::ThreeSigma;
};

/// Center line = mean, sigma = sample standard deviation (n - 1),
/// limits = center +/- k * sigma. Needs at least two scores.
ControlChart fit_chart(std::span<const double> scores, double k = 3.0, std::string feature = {});
/// Limits from externally estimated moments (e.g. validation-split scores).
ControlChart chart_from_moments(double center, double sigma, double k, std::string feature = {});

/// Indices whose score is strictly above the UCL. Low scores never flag.
std::vector<std::size_t> find_out_of_control(std::span<const double> scores,
                                             const ControlChart& chart);

struct AnomalyPeriod {
  std::string feature;
  data::Timestamp start = 0;
  data::Timestamp end = 0;  // exclusive: last flagged window start + T minutes
  double peakScore = 0;
  data::Timestamp peakWindowStart = 0;
  std::size_t firstWindow = 0;
  std::size_t lastWindow = 0;
  std::size_t rank = 0;
  // Other features whose overlapping periods were folded into this one when
  // ranking across features.
  std::vector<std::string> alsoFlagged;

  friend bool operator==(const AnomalyPeriod&, const AnomalyPeriod&) = default;
};

/// Merges sorted flagged window indices. Runs separated by at most
/// `gapTolerance` unflagged windows become one period. Ranked by peak score
/// (descending), ties to the earlier start.
std::vector<AnomalyPeriod> merge_periods(std::span<const std::size_t> flagged,
                                         std::span<const data::Timestamp> windowStarts,
                                         std::span<const double> scores, std::size_t steps,
                                         std::size_t gapTolerance = 0, std::string feature = {});

/// Ranks periods of all features together. A period overlapping in time with
/// a higher-ranked one is folded into it (its feature goes to alsoFlagged).
std::vector<AnomalyPeriod> rank_across_features(std::vector<AnomalyPeriod> periods);

enum class ChartMode { SelfFit, Baseline };

struct DetectOptions {
  double k = 3.0;
  std::size_t gapTolerance = 0;
  ChartMode mode = ChartMode::SelfFit;
  // Baseline mode only: per-feature center and sigma.
  std::vector<double> baselineCenter;
  std::vector<double> baselineSigma;
};

struct FeatureDetection {
  ControlChart chart;
  std::vector<std::size_t> flagged;
  std::vector<AnomalyPeriod> periods;
};

struct DetectionResult {
  std::vector<FeatureDetection> features;
  std::vector<AnomalyPeriod> ranked;  // across features
};

DetectionResult detect(const detector::ScoreSeries& scores, const DetectOptions& options);

nlohmann::json chart_to_json(const ControlChart& chart);
nlohmann::json period_to_json(const AnomalyPeriod& period);
AnomalyPeriod period_from_json(const nlohmann::json& j);
nlohmann::json detection_to_json(const DetectionResult& result, std::size_t topK);

}  // namespace dbdiag::spc
