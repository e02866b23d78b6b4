#include "dbdiag/spc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dbdiag/error.hpp"

namespace dbdiag::spc {

std::string_view rule_name(ChartRule rule) {
  switch (rule) {
    case ChartRule::ThreeSigma: return "three-sigma";
    case ChartRule::TwoSigmaWarning: return "two-sigma-warning";
    case ChartRule::Custom: return "custom";
  }
  return "?";
}

ControlChart chart_from_moments(double center, double sigma, double k, std::string feature) {
  if (!(k > 0)) throw ConfigError("sigma multiplier must be positive");
  ControlChart c;
  c.feature = std::move(feature);
  c.center = center;
  c.sigma = sigma;
  c.k = k;
  c.ucl = center + k * sigma;
  c.lcl = center - k * sigma;
  c.rule = k == 3.0 ? ChartRule::ThreeSigma
                    : (k == 2.0 ? ChartRule::TwoSigmaWarning : ChartRule::Custom);
  return c;
}

ControlChart fit_chart(std::span<const double> scores, double k, std::string feature) {
  if (scores.size() < 2) throw DataError("a control chart needs at least 2 scores");
  const double n = static_cast<double>(scores.size());
  const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / n;
  double ss = 0.0;
  for (double s : scores) ss += (s - mean) * (s - mean);
  return chart_from_moments(mean, std::sqrt(ss / (n - 1.0)), k, std::move(feature));
}

std::vector<std::size_t> find_out_of_control(std::span<const double> scores,
                                             const ControlChart& chart) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > chart.ucl) out.push_back(i);
  }
  return out;
}

namespace {

bool ranks_before(const AnomalyPeriod& a, const AnomalyPeriod& b) {
  if (a.peakScore != b.peakScore) return a.peakScore > b.peakScore;
  if (a.start != b.start) return a.start < b.start;
  return a.feature < b.feature;
}

}  // namespace

std::vector<AnomalyPeriod> merge_periods(std::span<const std::size_t> flagged,
                                         std::span<const data::Timestamp> windowStarts,
                                         std::span<const double> scores, std::size_t steps,
                                         std::size_t gapTolerance, std::string feature) {
  std::vector<AnomalyPeriod> out;
  const auto span = static_cast<data::Timestamp>(steps) * data::kMinute;
  for (std::size_t k = 0; k < flagged.size(); ++k) {
    const std::size_t idx = flagged[k];
    if (idx >= windowStarts.size() || idx >= scores.size()) {
      throw InternalError("flagged window index out of range");
    }
    if (k > 0 && idx <= flagged[k - 1]) throw InternalError("flagged indices must be sorted");
    const bool extend = !out.empty() && idx - out.back().lastWindow - 1 <= gapTolerance;
    if (!extend) {
      AnomalyPeriod p;
      p.feature = feature;
      p.firstWindow = idx;
      p.start = windowStarts[idx];
      p.peakScore = -std::numeric_limits<double>::infinity();
      out.push_back(p);
    }
    AnomalyPeriod& p = out.back();
    p.lastWindow = idx;
    p.end = windowStarts[idx] + span;
    if (scores[idx] > p.peakScore) {
      p.peakScore = scores[idx];
      p.peakWindowStart = windowStarts[idx];
    }
  }
  std::stable_sort(out.begin(), out.end(), ranks_before);
  for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = i + 1;
  return out;
}

std::vector<AnomalyPeriod> rank_across_features(std::vector<AnomalyPeriod> periods) {
  std::stable_sort(periods.begin(), periods.end(), ranks_before);
  std::vector<AnomalyPeriod> kept;
  for (auto& p : periods) {
    auto host = std::find_if(kept.begin(), kept.end(), [&](const AnomalyPeriod& k) {
      return p.start < k.end && k.start < p.end;
    });
    if (host == kept.end()) {
      kept.push_back(std::move(p));
    } else if (p.feature != host->feature &&
               std::find(host->alsoFlagged.begin(), host->alsoFlagged.end(), p.feature) ==
                   host->alsoFlagged.end()) {
      host->alsoFlagged.push_back(p.feature);
    }
  }
  for (std::size_t i = 0; i < kept.size(); ++i) kept[i].rank = i + 1;
  return kept;
}

DetectionResult detect(const detector::ScoreSeries& scores, const DetectOptions& options) {
  const std::size_t nf = scores.featureNames.size();
  if (options.mode == ChartMode::Baseline &&
      (options.baselineCenter.size() != nf || options.baselineSigma.size() != nf)) {
    throw ConfigError("baseline chart mode needs a center and sigma for every feature");
  }
  DetectionResult result;
  std::vector<AnomalyPeriod> all;
  for (std::size_t j = 0; j < nf; ++j) {
    const std::vector<double> col = scores.feature_scores(j);
    const std::string& name = scores.featureNames[j];
    FeatureDetection fd;
    fd.chart = options.mode == ChartMode::SelfFit
                   ? fit_chart(col, options.k, name)
                   : chart_from_moments(options.baselineCenter[j], options.baselineSigma[j],
                                        options.k, name);
    fd.flagged = find_out_of_control(col, fd.chart);
    fd.periods = merge_periods(fd.flagged, scores.windowStarts, col, scores.steps,
                               options.gapTolerance, name);
    all.insert(all.end(), fd.periods.begin(), fd.periods.end());
    result.features.push_back(std::move(fd));
  }
  result.ranked = rank_across_features(std::move(all));
  return result;
}

nlohmann::json chart_to_json(const ControlChart& c) {
  return {{"feature", c.feature}, {"center", c.center}, {"sigma", c.sigma}, {"k", c.k},
          {"ucl", c.ucl},         {"lcl", c.lcl},       {"rule", std::string(rule_name(c.rule))}};
}

nlohmann::json period_to_json(const AnomalyPeriod& p) {
  return {{"rank", p.rank},
          {"feature", p.feature},
          {"start", data::format_timestamp(p.start)},
          {"end", data::format_timestamp(p.end)},
          {"peak_score", p.peakScore},
          {"peak_window_start", data::format_timestamp(p.peakWindowStart)},
          {"first_window", p.firstWindow},
          {"last_window", p.lastWindow},
          {"also_flagged", p.alsoFlagged}};
}

AnomalyPeriod period_from_json(const nlohmann::json& j) {
  auto ts = [&](const char* key) {
    const auto v = data::parse_timestamp(j.at(key).get<std::string>());
    if (!v) throw DataError(std::string("bad timestamp in period field '") + key + "'");
    return *v;
  };
  try {
    AnomalyPeriod p;
    p.rank = j.at("rank").get<std::size_t>();
    p.feature = j.at("feature").get<std::string>();
    p.start = ts("start");
    p.end = ts("end");
    p.peakScore = j.at("peak_score").get<double>();
    p.peakWindowStart = ts("peak_window_start");
    p.firstWindow = j.at("first_window").get<std::size_t>();
    p.lastWindow = j.at("last_window").get<std::size_t>();
    p.alsoFlagged = j.at("also_flagged").get<std::vector<std::string>>();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed anomaly period: ") + e.what());
  }
}

nlohmann::json detection_to_json(const DetectionResult& result, std::size_t topK) {
  nlohmann::json charts = nlohmann::json::array();
  for (const auto& f : result.features) {
    nlohmann::json c = chart_to_json(f.chart);
    c["flagged_windows"] = f.flagged.size();
    nlohmann::json periods = nlohmann::json::array();
    for (const auto& p : f.periods) periods.push_back(period_to_json(p));
    c["periods"] = std::move(periods);
    charts.push_back(std::move(c));
  }
  nlohmann::json ranked = nlohmann::json::array();
  for (std::size_t i = 0; i < result.ranked.size() && i < topK; ++i) {
    ranked.push_back(period_to_json(result.ranked[i]));
  }
  return {{"charts", charts}, {"periods", ranked}, {"total_periods", result.ranked.size()}};
}

}  // namespace dbdiag::spc
