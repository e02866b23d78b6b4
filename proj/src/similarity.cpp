#include "dbdiag/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dbdiag/error.hpp"

namespace dbdiag::similarity {

double dtw_distance(std::span<const double> a, std::span<const double> b, LocalCost cost) {
  if (a.empty() || b.empty()) throw DataError("DTW needs two nonempty series");
  const double inf = std::numeric_limits<double>::infinity();
  // Two rolling rows of the cumulative cost matrix, with a sentinel column.
  std::vector<double> prev(b.size() + 1, inf);
  std::vector<double> cur(b.size() + 1, inf);
  prev[0] = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cur[0] = inf;
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double d = a[i] - b[j];
      const double c = cost == LocalCost::Absolute ? std::abs(d) : d * d;
      cur[j + 1] = c + std::min({prev[j], prev[j + 1], cur[j]});
    }
    std::swap(prev, cur);
    prev[0] = inf;
  }
  return prev[b.size()];
}

std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DataError("Pearson correlation needs series of equal length");
  if (a.size() < 2) throw DataError("Pearson correlation needs at least 2 points");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<double> z_normalize(std::span<const double> x) {
  std::vector<double> out(x.begin(), x.end());
  if (x.empty()) return out;
  const double n = static_cast<double>(x.size());
  const double m = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  const double sd = std::sqrt(ss / n);
  for (double& v : out) v = sd > 0.0 ? (v - m) / sd : 0.0;
  return out;
}

std::vector<EventMatch> rank_events(std::span<const double> stat,
                                    std::span<const NamedSeries> events,
                                    const MatchOptions& options) {
  const bool z = options.normalize == NormalizeMode::ZScore;
  const std::vector<double> statN = z ? z_normalize(stat) : std::vector<double>(stat.begin(), stat.end());
  std::vector<EventMatch> out;
  for (const auto& e : events) {
    if (e.values.size() != stat.size()) {
      throw DataError("event '" + e.name + "' is not aligned with the stat series");
    }
    EventMatch m;
    m.eventName = e.name;
    const std::vector<double> evN = z ? z_normalize(e.values) : e.values;
    m.dtwDistance = dtw_distance(statN, evN, options.cost);
    m.pearson = pearson(stat, e.values);
    out.push_back(std::move(m));
  }

  std::vector<std::size_t> order(out.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    const auto& px = out[x].pearson;
    const auto& py = out[y].pearson;
    if (px.has_value() != py.has_value()) return px.has_value();
    return px && *px > *py;
  });
  for (std::size_t r = 0; r < order.size(); ++r) out[order[r]].rankByPearson = r + 1;

  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return out[x].dtwDistance < out[y].dtwDistance;
  });
  std::vector<EventMatch> sorted;
  for (std::size_t r = 0; r < order.size(); ++r) {
    out[order[r]].rankByDtw = r + 1;
    sorted.push_back(out[order[r]]);
  }
  return sorted;
}

MatchResult match_events(const data::MetricFrame& statFrame, std::string_view feature,
                         const data::MetricFrame& eventFrame, data::Timestamp start,
                         data::Timestamp end, const MatchOptions& options) {
  const auto col = statFrame.index_of(feature);
  if (!col) throw DataError("stat metric '" + std::string(feature) + "' not found");
  MatchResult result;
  result.statFeature = std::string(feature);
  result.sliceStart = start;
  result.sliceEnd = end + static_cast<data::Timestamp>(options.trailingMarginMinutes) * data::kMinute;

  std::vector<double> stat;
  std::vector<std::size_t> eventRows;
  for (std::size_t r = 0; r < statFrame.rows(); ++r) {
    const auto ts = statFrame.timestamps[r];
    if (ts < result.sliceStart || ts >= result.sliceEnd) continue;
    const auto it = std::lower_bound(eventFrame.timestamps.begin(), eventFrame.timestamps.end(), ts);
    if (it == eventFrame.timestamps.end() || *it != ts) continue;
    stat.push_back(statFrame.at(r, *col));
    eventRows.push_back(static_cast<std::size_t>(it - eventFrame.timestamps.begin()));
  }
  result.points = stat.size();
  if (stat.size() < 2) {
    result.warnings.push_back("event metrics do not overlap the period " +
                              data::format_timestamp(result.sliceStart) + " - " +
                              data::format_timestamp(result.sliceEnd));
    return result;
  }

  std::vector<NamedSeries> events;
  for (std::size_t c = 0; c < eventFrame.cols(); ++c) {
    NamedSeries s{eventFrame.names[c], {}};
    s.values.reserve(eventRows.size());
    for (std::size_t r : eventRows) s.values.push_back(eventFrame.at(r, c));
    events.push_back(std::move(s));
  }
  result.matches = rank_events(stat, events, options);
  return result;
}

nlohmann::json match_to_json(const MatchResult& result, std::size_t topK) {
  nlohmann::json byDtw = nlohmann::json::array();
  std::vector<const EventMatch*> pearsonOrder;
  for (const auto& m : result.matches) pearsonOrder.push_back(&m);
  std::sort(pearsonOrder.begin(), pearsonOrder.end(),
            [](const EventMatch* a, const EventMatch* b) { return a->rankByPearson < b->rankByPearson; });
  auto entry = [](const EventMatch& m) {
    return nlohmann::json{{"event", m.eventName},
                          {"dtw", m.dtwDistance},
                          {"pearson", m.pearson ? nlohmann::json(*m.pearson) : nlohmann::json()},
                          {"rank_dtw", m.rankByDtw},
                          {"rank_pearson", m.rankByPearson}};
  };
  for (std::size_t i = 0; i < result.matches.size() && i < topK; ++i) byDtw.push_back(entry(result.matches[i]));
  nlohmann::json byPearson = nlohmann::json::array();
  for (std::size_t i = 0; i < pearsonOrder.size() && i < topK; ++i) byPearson.push_back(entry(*pearsonOrder[i]));
  return {{"stat_feature", result.statFeature},
          {"slice_start", data::format_timestamp(result.sliceStart)},
          {"slice_end", data::format_timestamp(result.sliceEnd)},
          {"points", result.points},
          {"by_dtw", byDtw},
          {"by_pearson", byPearson},
          {"warnings", result.warnings}};
}

}  // namespace dbdiag::similarity
