#pragma once

// Ranking wait-event series against a stat metric inside an anomaly period.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dbdiag/data.hpp"

namespace dbdiag::similarity {

enum class LocalCost { Absolute, Squared };

/// Unconstrained dynamic time warping over the full |a| x |b| grid with
/// match/insert/delete steps; returns the cumulative cost at the far corner.
double dtw_distance(std::span<const double> a, std::span<const double> b,
                    LocalCost cost = LocalCost::Absolute);

/// Sample correlation; nullopt when either series is constant.
std::optional<double> pearson(std::span<const double> a, std::span<const double> b);

/// (x - mean) / std with population std; a constant series maps to zeros.
std::vector<double> z_normalize(std::span<const double> x);

enum class NormalizeMode { ZScore, None };

struct MatchOptions {
  NormalizeMode normalize = NormalizeMode::ZScore;
  std::size_t trailingMarginMinutes = 0;
  LocalCost cost = LocalCost::Absolute;
};

struct EventMatch {
  std::string eventName;
  double dtwDistance = 0;
  std::optional<double> pearson;
  std::size_t rankByDtw = 0;
  std::size_t rankByPearson = 0;
};

struct MatchResult {
  std::string statFeature;
  data::Timestamp sliceStart = 0;
  data::Timestamp sliceEnd = 0;  // exclusive
  std::size_t points = 0;
  std::vector<EventMatch> matches;  // ordered by rankByDtw
  std::vector<std::string> warnings;
};

struct NamedSeries {
  std::string name;
  std::vector<double> values;
};

/// Scores each candidate against `stat` (all series equally long) and fills
/// both rankings. DTW ranks ascending by distance; Pearson ranks descending,
/// undefined correlations last. Ties keep the input order.
std::vector<EventMatch> rank_events(std::span<const double> stat,
                                    std::span<const NamedSeries> events,
                                    const MatchOptions& options);

/// Slices `feature` of the stat frame and every event metric to
/// [start, end + margin) and ranks the events. Only minutes present in both
/// frames are compared. Returns no matches (with a warning) when the event
/// frame does not overlap the slice.
MatchResult match_events(const data::MetricFrame& statFrame, std::string_view feature,
                         const data::MetricFrame& eventFrame, data::Timestamp start,
                         data::Timestamp end, const MatchOptions& options = {});

nlohmann::json match_to_json(const MatchResult& result, std::size_t topK);

}  // namespace dbdiag::similarity
