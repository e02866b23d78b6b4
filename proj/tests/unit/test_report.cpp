#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "dbdiag/error.hpp"
#include "dbdiag/report.hpp"
#include "dbdiag/svg.hpp"
#include "dbdiag/synth.hpp"
#include "fixtures.hpp"

using namespace dbdiag;

namespace {

struct Setup {
  synth::Dataset data;
  detector::Model model;
};

const Setup& setup() {
  static const Setup s = [] {
    auto spec = synth::default_scenario(5, 1500, 4);
    spec.injections = synth::default_injections(1500);
    Setup out{synth::generate(spec), {}};
    const auto prep = detector::prepare_training_data(out.data.stat, 10, 1);
    detector::TrainConfig c;
    c.batchSize = 128;
    c.maxEpochs = 4;
    c.seed = 2;
    out.model = detector::train(prep.windows, prep.norm, detector::parse_architecture("BTN-(16)-(4)-(16*)-BTN*"), c).model;
    return out;
  }();
  return s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream b;
  b << in.rdbuf();
  return b.str();
}

}  // namespace

TEST_SUITE("report") {

TEST_CASE("report sections agree with the individual stages") {
  const auto& s = setup();
  report::ReportOptions o;
  o.topPeriods = 3;
  const auto rep = report::build_report(s.model, s.data.stat, s.data.events, o, {{"k", 3}});
  const auto& doc = rep.document;

  const auto scores = detector::score_frame(s.model, s.data.stat, 1);
  const auto det = spc::detect(scores, o.detect);
  CHECK(doc.at("detection") == spc::detection_to_json(det, 3));
  const auto matches = report::match_periods(det.ranked, s.data.stat, s.data.events, o.match, 3);
  CHECK(doc.at("matches") == report::matches_to_json(det.ranked, matches, o.topEvents));

  const auto& meta = doc.at("metadata");
  CHECK(meta.at("model_id") == report::model_id(s.model));
  CHECK(meta.at("model_id") == detector::model_to_json(s.model).at("checksum"));
  CHECK(meta.at("architecture") == "BTN-(16)-(4)-(16*)-BTN*");
  CHECK(meta.at("config").at("k") == 3);
  CHECK(meta.at("data_range").at("windows") == scores.windows());
  CHECK(rep.text.find("BTN-(16)-(4)-(16*)-BTN*") != std::string::npos);
}

TEST_CASE("every manifest entry is an emitted file and every period has a plot") {
  const auto& s = setup();
  const auto rep = report::build_report(s.model, s.data.stat, s.data.events, {});
  std::set<std::string> emitted;
  for (const auto& [path, body] : rep.files) {
    emitted.insert(path);
    CHECK(body.rfind("<svg", 0) == 0);
    CHECK(body.find("http://www.w3.org/2000/svg") != std::string::npos);
    CHECK(body.find("href") == std::string::npos);
    CHECK(body.find("nan") == std::string::npos);
  }
  const auto& manifest = rep.document.at("manifest");
  CHECK(manifest.size() == rep.files.size());
  for (const auto& m : manifest) CHECK(emitted.count(m.at("file").get<std::string>()) == 1);
  const auto periods = rep.document.at("detection").at("periods").size();
  CHECK(rep.document.at("matches").size() == periods);
  std::size_t overlays = 0;
  for (const auto& m : manifest) overlays += m.at("kind") == "period_overlay";
  CHECK(overlays == periods);

  report::ReportOptions quiet;
  quiet.plots = false;
  CHECK(report::build_report(s.model, s.data.stat, s.data.events, quiet).files.empty());
}

TEST_CASE("reports are byte-for-byte reproducible on disk") {
  const auto& s = setup();
  const auto base = std::filesystem::temp_directory_path() / "dbdiag_report_test";
  std::filesystem::remove_all(base);
  for (const char* d : {"a", "b"}) {
    report::write_report(report::build_report(s.model, s.data.stat, s.data.events, {}), base / d);
  }
  CHECK(slurp(base / "a" / "report.json") == slurp(base / "b" / "report.json"));
  CHECK(slurp(base / "a" / "report.txt") == slurp(base / "b" / "report.txt"));
  CHECK(std::filesystem::exists(base / "a" / "plots"));
  const auto doc = nlohmann::json::parse(slurp(base / "a" / "report.json"));
  CHECK(report::dump_json(doc) == slurp(base / "a" / "report.json"));
  std::filesystem::remove_all(base);
}

TEST_CASE("baseline chart options come from the model") {
  const auto& s = setup();
  const auto o = report::detect_options_for(s.model, spc::ChartMode::Baseline, 2.0, 1);
  CHECK(o.baselineCenter == s.model.training.baselineCenter);
  CHECK(o.k == 2.0);
  CHECK(o.gapTolerance == 1);
  auto bare = s.model;
  bare.training.baselineCenter.clear();
  CHECK_THROWS_AS(report::detect_options_for(bare, spc::ChartMode::Baseline, 3.0, 0), ModelError);
  CHECK_NOTHROW(report::detect_options_for(bare, spc::ChartMode::SelfFit, 3.0, 0));
}

TEST_CASE("svg plots") {
  const auto f = fixtures::match_fixture();
  const auto m = similarity::match_events(f.stat, "Active Session", f.events, f.stat.timestamps.front(),
                                          f.stat.timestamps.back() + data::kMinute);
  const auto overlay = svg::period_overlay(f.stat, f.events, m, 2);
  CHECK(overlay.find("lagged copy") != std::string::npos);
  CHECK(overlay.find("unrelated") == std::string::npos);
  CHECK(overlay.find("<polyline") != std::string::npos);

  detector::ScoreSeries sc;
  sc.featureNames = {"a<b"};
  sc.steps = 10;
  sc.scores = Tensor({5, 1}, std::vector<double>{1, 2, 3, 2, 1});
  for (int i = 0; i < 5; ++i) sc.windowStarts.push_back(fixtures::kStart + i * data::kMinute);
  const auto chart = svg::score_chart(sc, 0, spc::fit_chart(sc.feature_scores(0)), {});
  CHECK(chart.find("a&lt;b") != std::string::npos);
  CHECK(chart.find("UCL") != std::string::npos);
}

}  // TEST_SUITE
