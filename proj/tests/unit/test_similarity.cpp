#include <doctest.h>

#include <cmath>
#include <random>

#include "dbdiag/error.hpp"
#include "dbdiag/similarity.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace dbdiag;
using namespace dbdiag::similarity;

namespace {

std::vector<double> draw(std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(-4, 4);  // small integers make ties likely
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng) * 0.5;
  return v;
}

const EventMatch& by_name(const MatchResult& r, const std::string& name) {
  for (const auto& m : r.matches) {
    if (m.eventName == name) return m;
  }
  throw std::runtime_error("no match named " + name);
}

}  // namespace

TEST_SUITE("similarity") {

TEST_CASE("DTW examples") {
  const std::vector<double> a{1, 2, 3}, b{2, 3, 4}, c{0, 1, 2}, d{0, 1, 2, 2};
  CHECK(dtw_distance(a, a) == 0.0);
  CHECK(dtw_distance(a, b) == 2.0);
  CHECK(dtw_distance(c, d) == 0.0);
  CHECK(dtw_distance(a, b, LocalCost::Squared) == oracle::dtw_enumerate(a, b, true));
  CHECK_THROWS_AS(dtw_distance(std::vector<double>{}, a), DataError);
}

TEST_CASE("DTW equals exhaustive path enumeration") {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> len(1, 6);
  for (int trial = 0; trial < 300; ++trial) {
    const auto a = draw(len(rng), rng), b = draw(len(rng), rng);
    CAPTURE(trial);
    CHECK(dtw_distance(a, b) == oracle::dtw_enumerate(a, b));
    CHECK(dtw_distance(a, b, LocalCost::Squared) == oracle::dtw_enumerate(a, b, true));
    CHECK(dtw_distance(a, b) == dtw_distance(b, a));
    CHECK(dtw_distance(a, b) >= 0.0);
  }
}

TEST_CASE("Pearson") {
  const std::vector<double> a{1, 2, 3}, b{1, 2, 4}, neg{-1, -2, -3}, flat{2, 2, 2};
  CHECK(*pearson(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(*pearson(a, neg) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(*pearson(a, b) == doctest::Approx(9.0 / std::sqrt(84.0)).epsilon(1e-15));
  CHECK_FALSE(pearson(a, flat).has_value());
  CHECK_THROWS_AS(pearson(a, std::vector<double>{1, 2}), DataError);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(std::uniform_int_distribution<std::size_t>(2, 200)(rng)), y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = g(rng);
      y[i] = 0.3 * x[i] + g(rng);
    }
    const double r = *pearson(x, y);
    CHECK(std::abs(r - oracle::pearson_direct(x, y)) <= 1e-12);
    std::vector<double> scaled(y);
    for (auto& v : scaled) v = 7.5 * v - 3;
    CHECK(std::abs(*pearson(x, scaled) - r) <= 1e-12);
    for (auto& v : scaled) v = -v;
    CHECK(std::abs(*pearson(x, scaled) + r) <= 1e-12);
  }
}

TEST_CASE("z-normalization") {
  const auto z = z_normalize(std::vector<double>{1, 2, 3});
  CHECK(z[0] == doctest::Approx(-1.224744871391589));
  CHECK(z_normalize(std::vector<double>{4, 4}) == std::vector<double>{0, 0});
}

TEST_CASE("ranking contract") {
  const std::vector<double> stat{1, 3, 2, 5, 4, 6};
  const std::vector<NamedSeries> events{
      {"flat", {1, 1, 1, 1, 1, 1}}, {"same", stat}, {"reversed", {6, 4, 5, 2, 3, 1}}};
  const auto r = rank_events(stat, events, {});
  const auto find = [&](const std::string& n) {
    for (const auto& m : r) {
      if (m.eventName == n) return m;
    }
    return EventMatch{};
  };
  CHECK(find("same").rankByDtw == 1);
  CHECK(find("same").rankByPearson == 1);
  CHECK(find("same").dtwDistance == 0.0);
  CHECK_FALSE(find("flat").pearson.has_value());
  CHECK(find("flat").rankByPearson == 3);
  CHECK(find("flat").rankByDtw >= 1);
  for (std::size_t k = 1; k < r.size(); ++k) CHECK(r[k - 1].dtwDistance <= r[k].dtwDistance);
}

TEST_CASE("lag and shape fixture") {
  const auto f = fixtures::match_fixture();
  const auto r = match_events(f.stat, "Active Session", f.events, f.stat.timestamps.front(),
                              f.stat.timestamps.back() + data::kMinute);
  REQUIRE(r.matches.size() == 3);
  CHECK(r.points == 60);
  CHECK(by_name(r, "lagged copy").rankByDtw == 1);
  CHECK(by_name(r, "shape copy").rankByPearson == 1);
  CHECK(by_name(r, "lagged copy").dtwDistance == doctest::Approx(0.09295059122611221).epsilon(1e-9));
  CHECK(*by_name(r, "shape copy").pearson == doctest::Approx(0.9334537899380874).epsilon(1e-9));
  CHECK(by_name(r, "unrelated").rankByDtw == 3);
}

TEST_CASE("match_events slicing") {
  const auto f = fixtures::match_fixture();
  const auto t0 = f.stat.timestamps.front();
  SUBCASE("trailing margin extends the slice") {
    MatchOptions o;
    o.trailingMarginMinutes = 5;
    const auto r = match_events(f.stat, "Active Session", f.events, t0 + 10 * data::kMinute,
                                t0 + 30 * data::kMinute, o);
    CHECK(r.points == 25);
    CHECK(r.sliceEnd == t0 + 35 * data::kMinute);
  }
  SUBCASE("events outside the period give a warning, not an error") {
    auto late = f.events;
    for (auto& ts : late.timestamps) ts += 1000 * data::kMinute;
    const auto r = match_events(f.stat, "Active Session", late, t0, t0 + 30 * data::kMinute);
    CHECK(r.matches.empty());
    CHECK(r.warnings.size() == 1);
  }
  SUBCASE("z-normalized DTW ignores affine rescaling of the raw inputs") {
    auto scaled = f.events;
    for (auto& v : scaled.values) v = 3 * v + 11;
    const auto a = match_events(f.stat, "Active Session", f.events, t0, t0 + 60 * data::kMinute);
    const auto b = match_events(f.stat, "Active Session", scaled, t0, t0 + 60 * data::kMinute);
    for (std::size_t k = 0; k < a.matches.size(); ++k) {
      CHECK(a.matches[k].eventName == b.matches[k].eventName);
      CHECK(a.matches[k].dtwDistance == doctest::Approx(b.matches[k].dtwDistance).epsilon(1e-9));
    }
  }
  CHECK_THROWS_AS(match_events(f.stat, "nope", f.events, t0, t0 + 10 * data::kMinute), DataError);
  const auto j = match_to_json(match_events(f.stat, "Active Session", f.events, t0, t0 + 60 * data::kMinute), 2);
  CHECK(j.dump().find("lagged copy") != std::string::npos);
}

}  // TEST_SUITE
