#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "dbdiag/detector.hpp"
#include "dbdiag/error.hpp"

using namespace dbdiag;
using namespace dbdiag::detector;

namespace {

constexpr data::Timestamp kT0 = 1704067200;

// Drifting, noisy sinusoids: the kind of non-stationary input BTN is meant for.
data::MetricFrame wavy_frame(std::size_t minutes, std::uint64_t seed) {
  data::MetricFrame f;
  f.names = {"alpha", "beta", "gamma"};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0, 1);
  for (std::size_t r = 0; r < minutes; ++r) {
    f.timestamps.push_back(kT0 + static_cast<data::Timestamp>(r) * data::kMinute);
    const double t = static_cast<double>(r);
    f.values.push_back(10 + 0.01 * t + 3 * std::sin(t / 9) + 0.3 * g(rng));
    f.values.push_back(-4 + 2 * std::cos(t / 13) + 0.2 * g(rng));
    f.values.push_back(100 + 0.05 * t + 5 * std::sin(t / 5) + g(rng));
  }
  return f;
}

TrainConfig small_config() {
  TrainConfig c;
  c.batchSize = 64;
  c.maxEpochs = 15;
  c.patience = 5;
  c.seed = 3;
  c.steps = 10;
  return c;
}

struct Trained {
  PreparedData data;
  TrainResult result;
};

const Trained& trained_btn() {
  static const Trained t = [] {
    Trained out{prepare_training_data(wavy_frame(500, 1), 10, 1), {}};
    out.result = train(out.data.windows, out.data.norm, parse_architecture("BTN-(16)-(4)-(16*)-BTN*"), small_config());
    return out;
  }();
  return t;
}

// A single affine layer with identity weights, so reconstruction = input + bias.
Model offset_model(std::size_t steps, std::size_t features, const std::vector<double>& bias) {
  const std::size_t w = steps * features;
  Tensor weight({w, w}, 0.0);
  for (std::size_t k = 0; k < w; ++k) weight[k * w + k] = 1.0;
  std::vector<std::unique_ptr<nn::Layer>> layers;
  layers.push_back(std::make_unique<nn::DenseLayer>(std::move(weight), Tensor({w}, bias)));
  Model m;
  m.network = nn::Network({steps, features}, std::move(layers));
  m.steps = steps;
  for (std::size_t j = 0; j < features; ++j) {
    m.norm.names.push_back("f" + std::to_string(j));
    m.norm.mean.push_back(0.0);
    m.norm.stdev.push_back(1.0);
  }
  return m;
}

data::WindowSet random_windows(std::size_t count, std::size_t steps, std::size_t features) {
  data::WindowSet s;
  s.shape = {steps, features};
  for (std::size_t j = 0; j < features; ++j) s.featureNames.push_back("f" + std::to_string(j));
  s.windows = Tensor({count, steps * features});
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g(0, 1);
  for (auto& v : s.windows.values()) v = g(rng);
  for (std::size_t i = 0; i < count; ++i) {
    s.startRows.push_back(i);
    s.startTimestamps.push_back(kT0 + static_cast<data::Timestamp>(i) * data::kMinute);
  }
  s.split.assign(count, data::Split::Unassigned);
  return s;
}

}  // namespace

TEST_SUITE("detector") {

TEST_CASE("per-window scores") {
  const auto set = random_windows(4, 3, 2);
  SUBCASE("perfect reconstruction scores zero") {
    const auto s = score_windows(offset_model(3, 2, std::vector<double>(6, 0.0)), set);
    for (double v : s.scores.values()) CHECK(v == 0.0);
  }
  SUBCASE("unit residual on one feature scores one") {
    // element t * features + j; feature 1 is off by one at every step
    const auto s = score_windows(offset_model(3, 2, {0, 1, 0, -1, 0, 1}), set);
    for (std::size_t i = 0; i < s.windows(); ++i) {
      CHECK(s.at(i, 0) == 0.0);
      CHECK(s.at(i, 1) == doctest::Approx(1.0).epsilon(1e-14));
    }
  }
  SUBCASE("residuals 3, 0, 0 over three steps score 3") {
    const auto s = score_windows(offset_model(3, 2, {3, 0, 0, 0, 0, 0}), set);
    CHECK(s.at(2, 0) == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(s.at(2, 1) == 0.0);
  }
  SUBCASE("scores are nonnegative, one row per window") {
    const auto& t = trained_btn();
    const auto s = score_windows(t.result.model, t.data.windows);
    CHECK(s.windows() == t.data.windows.size());
    for (double v : s.scores.values()) CHECK(v >= 0.0);
  }
}

TEST_CASE("training") {
  const auto& t = trained_btn();
  const auto& h = t.result.history;
  SUBCASE("the selected epoch has the lowest validation loss") {
    REQUIRE(!h.epochs.empty());
    for (const auto& e : h.epochs) CHECK(h.bestValidationLoss <= e.validationLoss);
    CHECK(h.epochs.at(h.bestEpoch - 1).validationLoss == h.bestValidationLoss);
    CHECK(t.result.model.training.bestEpoch == h.bestEpoch);
    CHECK(t.result.model.training.baselineSigma.size() == 3);
  }
  SUBCASE("same seed, same history and weights") {
    const auto again = train(t.data.windows, t.data.norm, parse_architecture("BTN-(16)-(4)-(16*)-BTN*"), small_config());
    REQUIRE(again.history.epochs.size() == h.epochs.size());
    for (std::size_t e = 0; e < h.epochs.size(); ++e) {
      CHECK(again.history.epochs[e].trainLoss == h.epochs[e].trainLoss);
      CHECK(again.history.epochs[e].validationLoss == h.epochs[e].validationLoss);
    }
    CHECK(again.testMse == t.result.testMse);
    CHECK(again.model.network.state() == t.result.model.network.state());
  }
  SUBCASE("mean test score equals the reported test MSE") {
    const auto s = score_windows(t.result.model, t.data.windows, data::Split::Test);
    long double acc = 0;
    for (double v : s.scores.values()) acc += v;
    const double mean = static_cast<double>(acc / s.scores.size());
    CHECK(std::abs(mean - t.result.testMse) <= 1e-12);
  }
  SUBCASE("empty splits and bad settings are rejected") {
    auto cfg = small_config();
    cfg.learningRate = 0;
    CHECK_THROWS_AS(train(t.data.windows, t.data.norm, parse_architecture("(4)"), cfg), ConfigError);
    auto unsplit = t.data.windows;
    std::fill(unsplit.split.begin(), unsplit.split.end(), data::Split::Train);
    CHECK_THROWS_AS(train(unsplit, t.data.norm, parse_architecture("(4)"), small_config()), ConfigError);
  }
}

TEST_CASE("a linear autoencoder learns noiseless low-rank data") {
  data::MetricFrame f;
  f.names = {"u", "v"};
  for (std::size_t r = 0; r < 400; ++r) {
    f.timestamps.push_back(kT0 + static_cast<data::Timestamp>(r) * data::kMinute);
    const double x = std::sin(static_cast<double>(r) / 6.0);
    f.values.push_back(x);
    f.values.push_back(2.0 * x + 1.0);
  }
  const auto prep = prepare_training_data(f, 8, 1);
  TrainConfig c;
  c.learningRate = 1e-2;
  c.l2Lambda = 0.0;
  c.batchSize = 32;
  c.maxEpochs = 150;
  c.patience = 0;
  c.seed = 5;
  const auto r = train(prep.windows, prep.norm, parse_architecture("PCA(4)"), c);
  CHECK(r.history.bestValidationLoss < 1e-3);
}

TEST_CASE("inference does not depend on batch composition") {
  const auto& t = trained_btn();
  const auto bn = train(t.data.windows, t.data.norm, parse_architecture("BN-(16)-(4)-(16*)-BN*"), small_config());
  for (const Model* m : {&t.result.model, &bn.model}) {
    const auto all = reconstruct(*m, t.data.windows.windows);
    for (std::size_t i = 0; i < t.data.windows.size(); i += 37) {
      const std::size_t idx[] = {i};
      const auto one = reconstruct(*m, t.data.windows.windows.gather_rows(idx));
      CHECK(std::equal(one.values().begin(), one.values().end(), all.row(i).begin()));
    }
  }
}

TEST_CASE("model persistence") {
  const auto& t = trained_btn();
  const auto dir = std::filesystem::temp_directory_path() / "dbdiag_model_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "model.json";
  save_model(t.result.model, path);

  SUBCASE("load then score is bit-identical") {
    const auto loaded = load_model(path);
    CHECK(score_windows(loaded, t.data.windows) == score_windows(t.result.model, t.data.windows));
    CHECK(loaded.features() == t.result.model.features());
    CHECK(loaded.architecture == t.result.model.architecture);
    CHECK(loaded.training.testMse == t.result.model.training.testMse);
    CHECK(model_to_json(loaded) == model_to_json(t.result.model));
  }
  SUBCASE("truncated file") {
    std::ifstream in(path);
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    const auto cut = dir / "cut.json";
    std::ofstream(cut) << text.substr(0, text.size() / 2);
    CHECK_THROWS_AS(load_model(cut), ModelError);
  }
  SUBCASE("tampered values fail the checksum") {
    auto doc = model_to_json(t.result.model);
    doc["steps"] = 11;
    CHECK_THROWS_AS(model_from_json(doc), ModelError);
    auto v = model_to_json(t.result.model);
    v["version"] = kModelFormatVersion + 1;
    CHECK_THROWS_AS(model_from_json(v), ModelError);
  }
  SUBCASE("scoring a frame with another feature order is a data error") {
    auto raw = wavy_frame(60, 2);
    std::swap(raw.names[0], raw.names[1]);
    CHECK_THROWS_AS(score_frame(load_model(path), raw), DataError);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("score series serialization") {
  const auto& t = trained_btn();
  const auto s = score_windows(t.result.model, t.data.windows, data::Split::Test);
  CHECK(scores_from_json(scores_to_json(s)) == s);
  std::ostringstream csv;
  write_scores_csv(s, csv);
  CHECK(csv.str().rfind("window_start,alpha,beta,gamma\n", 0) == 0);
}

TEST_CASE("ablation") {
  const auto& t = trained_btn();
  const std::vector<std::string> one{"BTN-(16)-(4)-(16*)-BTN*"};
  const auto rows = run_ablation(t.data.windows, t.data.norm, one, small_config());
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].testMse == t.result.testMse);
  CHECK(rows[0].bestEpoch == t.result.history.bestEpoch);
  CHECK(format_ablation_table(rows).find("BTN-(16)-(4)-(16*)-BTN*") != std::string::npos);

  const std::vector<std::string> bad{"(4)", "BTN-(4)"};
  try {
    run_ablation(t.data.windows, t.data.norm, bad, small_config());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("BTN-(4)") != std::string::npos);
  }
}

}  // TEST_SUITE
