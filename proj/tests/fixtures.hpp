#pragma once

// Shared constructed data sets.

#include <cmath>
#include <string>

#include "dbdiag/data.hpp"

namespace fixtures {

inline constexpr dbdiag::data::Timestamp kStart = 1704067200;  // 2024-01-01T00:00:00Z

struct MatchFixture {
  dbdiag::data::MetricFrame stat;
  dbdiag::data::MetricFrame events;
};

// One stat spike and three candidate events over 60 minutes:
//   "lagged copy"  the spike two minutes late at 200x the magnitude,
//   "shape copy"   0.05x the spike in step, plus deterministic wiggle,
//   "unrelated"    a slow cosine.
// Reference values (numpy, z-normalized DTW / raw Pearson):
//   lagged 0.0930 / 0.8703, shape 17.22 / 0.9335, unrelated 51.39 / 0.4517.
inline MatchFixture match_fixture() {
  MatchFixture f;
  f.stat.kind = dbdiag::data::MetricKind::Stat;
  f.stat.names = {"Active Session"};
  f.events.kind = dbdiag::data::MetricKind::Event;
  f.events.names = {"lagged copy", "shape copy", "unrelated"};
  const int n = 60;
  auto stat_at = [](int t) {
    const double d = (t - 25) / 3.0;
    return 10 + 0.5 * std::sin(t / 5.0) + 40 * std::exp(-0.5 * d * d);
  };
  for (int t = 0; t < n; ++t) {
    const auto ts = kStart + t * dbdiag::data::kMinute;
    f.stat.timestamps.push_back(ts);
    f.events.timestamps.push_back(ts);
    f.stat.values.push_back(stat_at(t));
    f.events.values.push_back(200 * stat_at(t >= 2 ? t - 2 : 0));
    f.events.values.push_back(0.05 * stat_at(t) + 0.25 * std::sin(1.7 * t) + 0.15 * std::cos(2.9 * t + 0.4));
    f.events.values.push_back(5 + std::cos(t / 4.0));
  }
  return f;
}

}  // namespace fixtures
