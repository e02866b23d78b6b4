#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "dbdiag/error.hpp"
#include "dbdiag/spc.hpp"
#include "oracles.hpp"

using namespace dbdiag;
using namespace dbdiag::spc;

namespace {

std::vector<data::Timestamp> minute_starts(std::size_t n, data::Timestamp t0 = 1704067200) {
  std::vector<data::Timestamp> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = t0 + static_cast<data::Timestamp>(i) * data::kMinute;
  return out;
}

detector::ScoreSeries series(std::vector<std::string> names, std::size_t windows, std::mt19937_64& rng) {
  detector::ScoreSeries s;
  s.featureNames = std::move(names);
  s.windowStarts = minute_starts(windows);
  s.steps = 30;
  s.scores = Tensor({windows, s.featureNames.size()});
  std::exponential_distribution<double> e(1.0);
  for (auto& v : s.scores.values()) v = 0.1 * e(rng);
  return s;
}

}  // namespace

TEST_SUITE("spc") {

TEST_CASE("fit_chart") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const auto c = fit_chart(x);
  CHECK(c.center == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(c.sigma == doctest::Approx(1.5811388300841898).epsilon(1e-15));
  CHECK(c.ucl == doctest::Approx(7.7434164902525691).epsilon(1e-15));
  CHECK(c.lcl == doctest::Approx(-1.7434164902525691).epsilon(1e-15));
  CHECK(c.rule == ChartRule::ThreeSigma);

  const auto flat = fit_chart(std::vector<double>{2, 2, 2});
  CHECK(flat.sigma == 0.0);
  CHECK(flat.ucl == flat.center);
  CHECK(flat.lcl == flat.center);

  const auto two = fit_chart(x, 2.0);
  CHECK(two.rule == ChartRule::TwoSigmaWarning);
  CHECK((two.ucl - two.center) / (c.ucl - c.center) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

  CHECK_THROWS_AS(fit_chart(std::vector<double>{1}), DataError);
}

TEST_CASE("limits match the direct formulas") {
  std::mt19937_64 rng(21);
  std::lognormal_distribution<double> d(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(std::uniform_int_distribution<std::size_t>(2, 400)(rng));
    for (auto& v : x) v = d(rng);
    const auto c = fit_chart(x);
    const double m = oracle::mean(x), s = oracle::sample_sd(x);
    CHECK(std::abs(c.center - m) <= 1e-12 * std::max(1.0, std::abs(m)));
    CHECK(std::abs(c.sigma - s) <= 1e-12 * std::max(1.0, s));
    CHECK(std::abs(c.ucl - (m + 3 * s)) <= 1e-12 * std::max(1.0, m + 3 * s));
    CHECK(c.lcl <= c.center);
    CHECK(c.center <= c.ucl);
  }
}

TEST_CASE("out-of-control rule") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  CHECK(find_out_of_control(x, fit_chart(x)).empty());
  const std::vector<double> y{1, 1, 1, 1, 100};
  // Oracle: mean 20.8, sample sd 44.27..., UCL 153.6 with all five points;
  // the spike is only out of control against the chart of the other four.
  const auto own = fit_chart(y);
  CHECK(own.ucl == doctest::Approx(oracle::mean(y) + 3 * oracle::sample_sd(y)));
  CHECK(find_out_of_control(y, own).empty());
  CHECK(find_out_of_control(y, fit_chart(std::span(y).first(4))) == std::vector<std::size_t>{4});
  const std::vector<double> many{1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 100};
  CHECK(find_out_of_control(many, fit_chart(many)) == std::vector<std::size_t>{12});
  const std::vector<double> same{4, 4, 4, 4};
  CHECK(find_out_of_control(same, fit_chart(same)).empty());
  const std::vector<double> low{10, 10, 10, 10, 10, 10, 10, 10, 10, 10, -50};
  CHECK(find_out_of_control(low, fit_chart(low)).empty());
}

TEST_CASE("flagging is invariant to positive scaling") {
  std::mt19937_64 rng(5);
  std::exponential_distribution<double> e(1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(300);
    for (auto& v : x) v = e(rng);
    const double c = std::uniform_real_distribution<double>(0.01, 100.0)(rng);
    std::vector<double> y(x);
    for (auto& v : y) v *= c;
    CHECK(find_out_of_control(x, fit_chart(x)) == find_out_of_control(y, fit_chart(y)));
  }
}

TEST_CASE("null Gaussian false alarm rate") {
  std::mt19937_64 rng(1000);
  std::normal_distribution<double> g(0, 1);
  std::vector<double> x(1000);
  for (auto& v : x) v = g(rng);
  const double frac = static_cast<double>(find_out_of_control(x, fit_chart(x)).size()) / x.size();
  CHECK(frac <= 0.02);
}

TEST_CASE("merge_periods") {
  const auto starts = minute_starts(60);
  std::vector<double> scores(60, 0.0);
  scores[11] = 5;
  scores[40] = 9;
  SUBCASE("three consecutive windows make one 32-minute period") {
    const std::vector<std::size_t> f{10, 11, 12};
    const auto p = merge_periods(f, starts, scores, 30);
    REQUIRE(p.size() == 1);
    CHECK(p[0].end - p[0].start == 32 * data::kMinute);
    CHECK(p[0].start == starts[10]);
    CHECK(p[0].peakScore == 5);
    CHECK(p[0].peakWindowStart == starts[11]);
    CHECK(p[0].rank == 1);
  }
  SUBCASE("separate runs are separate periods, ranked by peak") {
    const std::vector<std::size_t> f{10, 40};
    const auto p = merge_periods(f, starts, scores, 30);
    REQUIRE(p.size() == 2);
    CHECK(p[0].start == starts[40]);
    CHECK(p[1].start == starts[10]);
    CHECK(p[1].rank == 2);
  }
  SUBCASE("gap tolerance bridges short holes") {
    const std::vector<std::size_t> f{10, 12, 20};
    CHECK(merge_periods(f, starts, scores, 30, 0).size() == 3);
    CHECK(merge_periods(f, starts, scores, 30, 1).size() == 2);
    CHECK(merge_periods(f, starts, scores, 30, 7).size() == 1);
  }
  SUBCASE("ties go to the earlier start") {
    std::vector<double> flat(60, 1.0);
    const std::vector<std::size_t> sorted{5, 30};
    const auto p = merge_periods(sorted, starts, flat, 30);
    REQUIRE(p.size() == 2);
    CHECK(p[0].start == starts[5]);
  }
  CHECK(merge_periods(std::vector<std::size_t>{}, starts, scores, 30).empty());
}

TEST_CASE("detect covers every flagged window exactly once") {
  std::mt19937_64 rng(8);
  auto s = series({"a", "b", "c"}, 500, rng);
  for (std::size_t i = 200; i < 210; ++i) s.scores[i * 3 + 1] += 3.0;
  for (std::size_t i = 205; i < 215; ++i) s.scores[i * 3 + 2] += 1.0;
  const auto r = detect(s, {});
  REQUIRE(r.features.size() == 3);
  for (const auto& fd : r.features) {
    for (std::size_t idx : fd.flagged) {
      int covering = 0;
      for (const auto& p : fd.periods) covering += idx >= p.firstWindow && idx <= p.lastWindow;
      CHECK(covering == 1);
    }
    for (std::size_t k = 1; k < fd.periods.size(); ++k) CHECK(fd.periods[k - 1].peakScore >= fd.periods[k].peakScore);
  }
  REQUIRE(!r.ranked.empty());
  CHECK(r.ranked[0].feature == "b");
  CHECK(r.ranked[0].rank == 1);
  // The overlapping 'c' period folds into the stronger 'b' one.
  CHECK(std::find(r.ranked[0].alsoFlagged.begin(), r.ranked[0].alsoFlagged.end(), "c") !=
        r.ranked[0].alsoFlagged.end());
  for (std::size_t k = 1; k < r.ranked.size(); ++k) CHECK(r.ranked[k].rank == k + 1);
}

TEST_CASE("baseline mode uses the supplied moments") {
  std::mt19937_64 rng(9);
  const auto s = series({"a", "b"}, 100, rng);
  DetectOptions o;
  o.mode = ChartMode::Baseline;
  o.baselineCenter = {0.0, 10.0};
  o.baselineSigma = {0.01, 1.0};
  const auto r = detect(s, o);
  CHECK(r.features[0].chart.ucl == doctest::Approx(0.03));
  CHECK(r.features[0].flagged.size() > 50);
  CHECK(r.features[1].flagged.empty());
  o.baselineSigma.pop_back();
  CHECK_THROWS_AS(detect(s, o), ConfigError);
}

TEST_CASE("period JSON round trip") {
  AnomalyPeriod p{"Active Session", 1704067200, 1704069120, 4.25, 1704067800, 3, 9, 2, {"CPU Used"}};
  CHECK(period_from_json(period_to_json(p)) == p);
  const auto c = chart_to_json(fit_chart(std::vector<double>{1, 2, 3, 4, 5}, 3.0, "x"));
  CHECK(c.at("feature") == "x");
  CHECK(c.at("ucl").get<double>() == doctest::Approx(7.7434164902525691));
}

}  // TEST_SUITE
