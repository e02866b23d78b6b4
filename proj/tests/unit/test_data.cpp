#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "dbdiag/data.hpp"
#include "dbdiag/error.hpp"
#include "oracles.hpp"

using namespace dbdiag::data;

namespace {

constexpr Timestamp kT0 = 1700000040;  // minute-aligned

MetricFrame ramp_frame(std::size_t minutes, std::size_t features = 2, std::size_t gapAfter = 0) {
  MetricFrame f;
  for (std::size_t j = 0; j < features; ++j) f.names.push_back("m" + std::to_string(j));
  for (std::size_t r = 0; r < minutes; ++r) {
    const Timestamp skip = gapAfter != 0 && r >= gapAfter ? kMinute : 0;
    f.timestamps.push_back(kT0 + static_cast<Timestamp>(r) * kMinute + skip);
    for (std::size_t j = 0; j < features; ++j) f.values.push_back(static_cast<double>(r * (j + 1)) + 0.5 * j);
  }
  return f;
}

std::string csv_of(const MetricFrame& f) {
  std::ostringstream out;
  write_metrics(f, out);
  return out.str();
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("timestamps parse in both accepted forms") {
  CHECK(parse_timestamp("1700000040") == 1700000040);
  CHECK(parse_timestamp("2024-01-01T00:05:00Z") == 1704067500);
  CHECK(parse_timestamp("2024-01-01 00:05") == 1704067500);
  CHECK_FALSE(parse_timestamp("yesterday").has_value());
  CHECK(format_timestamp(1704067500) == "2024-01-01T00:05:00Z");
}

TEST_CASE("load_metrics") {
  SUBCASE("three well-formed rows") {
    std::istringstream in("timestamp,a,b\n2024-01-01T00:00:00Z,1,2\n2024-01-01T00:01:00Z,3,4\n2024-01-01T00:02:00Z,5,6\n");
    const auto f = parse_metrics(in, MetricKind::Stat);
    CHECK(f.rows() == 3);
    CHECK(f.names == std::vector<std::string>{"a", "b"});
    CHECK(f.at(2, 1) == 6.0);
  }
  SUBCASE("shuffled rows give the sorted frame") {
    const auto sorted = ramp_frame(20, 3);
    std::istringstream a(csv_of(sorted));
    std::string text = csv_of(sorted);
    std::vector<std::string> lines;
    std::istringstream split(text);
    for (std::string l; std::getline(split, l);) lines.push_back(l);
    std::mt19937_64 rng(4);
    std::shuffle(lines.begin() + 1, lines.end(), rng);
    std::string shuffled;
    for (const auto& l : lines) shuffled += l + "\n";
    std::istringstream b(shuffled);
    CHECK(parse_metrics(a, MetricKind::Stat) == parse_metrics(b, MetricKind::Stat));
  }
  SUBCASE("bad cell cites its row") {
    std::string text = "timestamp,x\n";
    for (int r = 1; r <= 8; ++r) {
      text += std::to_string(kT0 + r * kMinute) + "," + (r == 7 ? std::string("abc") : std::to_string(r)) + "\n";
    }
    std::istringstream in(text);
    try {
      parse_metrics(in, MetricKind::Stat);
      FAIL("expected a data error");
    } catch (const dbdiag::DataError& e) {
      CHECK(std::string(e.what()).find("row 7") != std::string::npos);
      CHECK(std::string(e.what()).find("abc") != std::string::npos);
    }
  }
  SUBCASE("duplicate timestamps and empty input are rejected") {
    std::istringstream dup("timestamp,x\n1700000040,1\n1700000040,2\n");
    CHECK_THROWS_AS(parse_metrics(dup, MetricKind::Stat), dbdiag::DataError);
    std::istringstream empty("");
    CHECK_THROWS_AS(parse_metrics(empty, MetricKind::Stat), dbdiag::DataError);
    CHECK_THROWS_AS(load_metrics("/nonexistent/metrics.csv", MetricKind::Stat), dbdiag::DataError);
  }
  SUBCASE("write then load round trips exactly") {
    auto f = ramp_frame(15, 3);
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g(0, 1e4);
    for (auto& v : f.values) v = g(rng);
    const auto path = std::filesystem::temp_directory_path() / "dbdiag_roundtrip.csv";
    write_metrics(f, path);
    const auto back = load_metrics(path, MetricKind::Stat);
    std::filesystem::remove(path);
    CHECK(back == f);
    CHECK(csv_of(back) == csv_of(f));
  }
}

TEST_CASE("global normalization") {
  MetricFrame f;
  f.names = {"x"};
  f.timestamps = {kT0, kT0 + kMinute};
  f.values = {2, 4};
  const auto norm = fit_global_norm(f);
  CHECK(norm.mean[0] == 3.0);
  CHECK(norm.stdev[0] == 1.0);
  const auto z = apply_global_norm(f, norm);
  CHECK(z.values == std::vector<double>{-1, 1});

  auto wide = ramp_frame(50, 4);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(100, 30);
  for (auto& v : wide.values) v = g(rng);
  const auto zz = apply_global_norm(wide, fit_global_norm(wide));
  for (std::size_t j = 0; j < zz.cols(); ++j) {
    CHECK(std::abs(oracle::mean(zz.column(j))) < 1e-12);
    CHECK(oracle::population_sd(zz.column(j)) == doctest::Approx(1.0).epsilon(1e-12));
  }

  f.values = {5, 5};
  try {
    fit_global_norm(f);
    FAIL("expected a configuration error");
  } catch (const dbdiag::ConfigError& e) {
    CHECK(std::string(e.what()).find("'x'") != std::string::npos);
  }
}

TEST_CASE("feature mismatch lists both name lists") {
  const std::vector<std::string> a{"p", "q"}, b{"q", "p"};
  CHECK_NOTHROW(require_same_features(a, a, "scoring"));
  try {
    require_same_features(a, b, "scoring");
    FAIL("expected a data error");
  } catch (const dbdiag::DataError& e) {
    const std::string m = e.what();
    CHECK(m.find("'p', 'q'") != std::string::npos);
    CHECK(m.find("'q', 'p'") != std::string::npos);
  }
}

TEST_CASE("windowing") {
  CHECK(make_windows(ramp_frame(100), 30, 1).size() == 71);
  CHECK(make_windows(ramp_frame(90), 30, 30).size() == 3);
  CHECK_THROWS_AS(make_windows(ramp_frame(20), 30, 1), dbdiag::DataError);

  SUBCASE("windows never span a gap") {
    const auto f = ramp_frame(100, 1, 50);  // minute 50 is missing
    const auto segs = contiguous_segments(f);
    REQUIRE(segs.size() == 2);
    CHECK(segs[0] == std::pair<std::size_t, std::size_t>{0, 50});
    const auto w = make_windows(f, 30, 1);
    CHECK(w.size() == 21 + 21);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const auto r = w.startRows[i];
      CHECK(f.timestamps[r + 29] - f.timestamps[r] == 29 * kMinute);
    }
  }
  SUBCASE("stride-T windows concatenate back to the segment") {
    const auto f = ramp_frame(90, 2);
    const auto w = make_windows(f, 30, 30);
    std::vector<double> joined(w.windows.values().begin(), w.windows.values().end());
    CHECK(joined == f.values);
    CHECK(w.startTimestamps[1] == kT0 + 30 * kMinute);
  }
}

TEST_CASE("chronological split") {
  const auto count = [](const WindowSet& s, Split which) { return s.indices(which).size(); };
  auto ten = split_windows(make_windows(ramp_frame(39), 30, 1));
  CHECK(count(ten, Split::Train) == 6);
  CHECK(count(ten, Split::Validation) == 2);
  CHECK(count(ten, Split::Test) == 2);

  auto many = split_windows(make_windows(ramp_frame(100), 30, 1));
  CHECK(count(many, Split::Train) == 43);
  CHECK(count(many, Split::Validation) == 14);
  CHECK(count(many, Split::Test) == 14);
  // Partition, in time order.
  for (std::size_t i = 1; i < many.size(); ++i) {
    CHECK(static_cast<int>(many.split[i - 1]) <= static_cast<int>(many.split[i]));
    CHECK(many.split[i] != Split::Unassigned);
  }

  CHECK_THROWS_AS(split_windows(make_windows(ramp_frame(39), 30, 1), {1.0, 0.0, 0.0}), dbdiag::ConfigError);
  CHECK_THROWS_AS(split_windows(make_windows(ramp_frame(39), 30, 1), {0.5, 0.2, 0.2}), dbdiag::ConfigError);
}

}  // TEST_SUITE
