// dbdiag: train an anomaly detector on DBMS stat metrics, score and chart new
// metrics, match wait events to anomaly periods and write diagnosis reports.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dbdiag/architecture.hpp"
#include "dbdiag/data.hpp"
#include "dbdiag/detector.hpp"
#include "dbdiag/error.hpp"
#include "dbdiag/report.hpp"
#include "dbdiag/similarity.hpp"
#include "dbdiag/spc.hpp"
#include "dbdiag/synth.hpp"
#include "json_config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dbdiag;

namespace {

const std::string kDefaultArchitecture = "BTN-(150)-(50)-(150*)-BTN*";

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void emit(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << text;
}

data::MetricFrame load_stat(const std::string& path, const std::vector<std::string>& features) {
  data::MetricFrame f = data::load_metrics(path, data::MetricKind::Stat);
  return features.empty() ? f : data::select_columns(f, features);
}

spc::ChartMode chart_mode(const std::string& s) {
  if (s == "self") return spc::ChartMode::SelfFit;
  if (s == "baseline") return spc::ChartMode::Baseline;
  throw ConfigError("--chart must be 'self' or 'baseline'");
}

similarity::MatchOptions match_options(const std::string& normalize, const std::string& cost,
                                       std::size_t margin) {
  similarity::MatchOptions o;
  if (normalize == "zscore") o.normalize = similarity::NormalizeMode::ZScore;
  else if (normalize == "none") o.normalize = similarity::NormalizeMode::None;
  else throw ConfigError("--normalize must be 'zscore' or 'none'");
  if (cost == "abs") o.cost = similarity::LocalCost::Absolute;
  else if (cost == "squared") o.cost = similarity::LocalCost::Squared;
  else throw ConfigError("--cost must be 'abs' or 'squared'");
  o.trailingMarginMinutes = margin;
  return o;
}

data::Timestamp timestamp_arg(const std::string& text, const char* flag) {
  const auto ts = data::parse_timestamp(text);
  if (!ts) throw ConfigError(std::string(flag) + ": not a timestamp: '" + text + "'");
  return *ts;
}

struct TrainFlags {
  std::string arch = kDefaultArchitecture;
  std::size_t steps = 30;
  std::size_t stride = 1;
  double lr = 1e-3;
  double l2 = 1e-3;
  std::size_t batch = 1500;
  std::size_t epochs = 200;
  std::size_t patience = 20;

  void add_to(CLI::App* app, bool withArch) {
    if (withArch) app->add_option("--arch", arch, "Architecture string")->capture_default_str();
    app->add_option("--steps", steps, "Window length T in minutes")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--stride", stride, "Window stride")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--lr", lr, "ADAM learning rate")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--l2", l2, "L2 penalty on dense weights")->capture_default_str()->check(CLI::NonNegativeNumber);
    app->add_option("--batch", batch, "Mini-batch size")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--epochs", epochs, "Maximum epochs")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--patience", patience, "Early-stopping patience in epochs (0 disables)")->capture_default_str();
  }

  detector::TrainConfig config(std::uint64_t seed) const {
    detector::TrainConfig c;
    c.learningRate = lr;
    c.l2Lambda = l2;
    c.batchSize = batch;
    c.maxEpochs = epochs;
    c.patience = patience;
    c.seed = seed;
    c.steps = steps;
    return c;
  }
};

struct DetectFlags {
  double k = 3.0;
  std::size_t gap = 0;
  std::string chart = "self";
  std::size_t top = 5;

  void add_to(CLI::App* app) {
    app->add_option("--k", k, "Sigma multiplier for the control limits")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--gap", gap, "Unflagged windows tolerated inside one period")->capture_default_str();
    app->add_option("--chart", chart, "Control limits: self (fit on the scores) or baseline (model's validation scores)")
        ->capture_default_str()
        ->check(CLI::IsMember({"self", "baseline"}));
    app->add_option("--top", top, "Ranked periods to report")->capture_default_str()->check(CLI::PositiveNumber);
  }
};

struct MatchFlags {
  std::string normalize = "zscore";
  std::string cost = "abs";
  std::size_t margin = 0;
  std::size_t topEvents = 5;

  void add_to(CLI::App* app) {
    app->add_option("--normalize", normalize, "Per-period normalization before DTW")
        ->capture_default_str()
        ->check(CLI::IsMember({"zscore", "none"}));
    app->add_option("--cost", cost, "DTW local cost")->capture_default_str()->check(CLI::IsMember({"abs", "squared"}));
    app->add_option("--margin", margin, "Minutes appended to each period before matching")->capture_default_str();
    app->add_option("--top-events", topEvents, "Events listed per period and measure")->capture_default_str()->check(CLI::PositiveNumber);
  }
  similarity::MatchOptions options() const { return match_options(normalize, cost, margin); }
};

json training_summary(const detector::TrainResult& r) {
  return {{"architecture", r.model.architecture.text},
          {"features", r.model.features()},
          {"epochs_run", r.history.epochs.size()},
          {"best_epoch", r.history.bestEpoch},
          {"best_validation_mse", r.history.bestValidationLoss},
          {"test_mse", r.testMse},
          {"model_id", report::model_id(r.model)}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anomaly-period detection and wait-event matching for DBMS metrics"};
  app.config_formatter(std::make_shared<cli::JsonConfig>());
  app.set_config("--config", "", "JSON file with option values (flags override it)");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.fallthrough();
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Seed for every random draw")->capture_default_str();

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic scenario with labeled disorders");
  std::string genOut = "data";
  std::size_t genMinutes = 10080, genEvents = 8;
  std::string genScenario;
  bool genClean = false;
  gen->add_option("--out", genOut, "Output directory")->capture_default_str();
  gen->add_option("--minutes", genMinutes, "Scenario length")->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--events", genEvents, "Number of wait-event metrics")->capture_default_str();
  gen->add_option("--scenario", genScenario, "Scenario JSON (overrides the built-in scenario)")->check(CLI::ExistingFile);
  gen->add_flag("--clean", genClean, "No injected disorders");

  // train
  auto* train = app.add_subcommand("train", "Train an autoencoder on stat metrics");
  TrainFlags trainFlags;
  std::string trainStat, trainModel, trainHistory;
  std::vector<std::string> trainFeatures;
  train->add_option("--stat", trainStat, "Stat metrics CSV")->required()->check(CLI::ExistingFile);
  train->add_option("--model", trainModel, "Output model file")->required();
  train->add_option("--history", trainHistory, "Per-epoch loss CSV");
  train->add_option("--features", trainFeatures, "Stat metrics to use (default: every column)");
  trainFlags.add_to(train, true);

  // score
  auto* score = app.add_subcommand("score", "Per-window, per-feature anomaly scores");
  std::string scoreModel, scoreStat, scoreOut, scoreCsv;
  std::size_t scoreStride = 1;
  score->add_option("--model", scoreModel, "Model file")->required()->check(CLI::ExistingFile);
  score->add_option("--stat", scoreStat, "Stat metrics CSV")->required()->check(CLI::ExistingFile);
  score->add_option("--stride", scoreStride, "Window stride")->capture_default_str()->check(CLI::PositiveNumber);
  score->add_option("--out", scoreOut, "Scores JSON (default stdout)");
  score->add_option("--csv", scoreCsv, "Also write scores as CSV");

  // detect
  auto* detect = app.add_subcommand("detect", "Control charts and ranked anomaly periods");
  DetectFlags detectFlags;
  std::string detectScores, detectModel, detectOut;
  detect->add_option("--scores", detectScores, "Scores JSON from 'score'")->required()->check(CLI::ExistingFile);
  detect->add_option("--model", detectModel, "Model file (for --chart baseline)")->check(CLI::ExistingFile);
  detect->add_option("--out", detectOut, "Detection JSON (default stdout)");
  detectFlags.add_to(detect);

  // match
  auto* match = app.add_subcommand("match", "Rank wait events against a stat metric in a period");
  MatchFlags matchFlags;
  std::string matchStat, matchEvents, matchPeriods, matchFeature, matchStart, matchEnd, matchOut;
  std::size_t matchTop = 5;
  match->add_option("--stat", matchStat, "Stat metrics CSV")->required()->check(CLI::ExistingFile);
  match->add_option("--events", matchEvents, "Event metrics CSV")->required()->check(CLI::ExistingFile);
  match->add_option("--periods", matchPeriods, "Detection JSON from 'detect'")->check(CLI::ExistingFile);
  match->add_option("--top", matchTop, "Periods to match (with --periods)")->capture_default_str()->check(CLI::PositiveNumber);
  match->add_option("--feature", matchFeature, "Stat metric (without --periods)");
  match->add_option("--start", matchStart, "Period start (without --periods)");
  match->add_option("--end", matchEnd, "Period end, exclusive (without --periods)");
  match->add_option("--out", matchOut, "Match JSON (default stdout)");
  matchFlags.add_to(match);

  // report
  auto* rep = app.add_subcommand("report", "Score, detect and match end to end and write a diagnosis report");
  DetectFlags reportDetect;
  MatchFlags reportMatch;
  std::string repModel, repStat, repEvents, repOut = "report";
  std::size_t repStride = 1;
  bool repNoPlots = false;
  rep->add_option("--model", repModel, "Model file")->required()->check(CLI::ExistingFile);
  rep->add_option("--stat", repStat, "Stat metrics CSV")->required()->check(CLI::ExistingFile);
  rep->add_option("--events", repEvents, "Event metrics CSV")->required()->check(CLI::ExistingFile);
  rep->add_option("--out", repOut, "Output directory")->capture_default_str();
  rep->add_option("--stride", repStride, "Window stride")->capture_default_str()->check(CLI::PositiveNumber);
  rep->add_flag("--no-plots", repNoPlots, "Skip the SVG plots");
  reportDetect.add_to(rep);
  reportMatch.add_to(rep);

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Train several architectures on the same data and compare test MSE");
  TrainFlags ablateFlags;
  std::string ablateStat, ablateOut, ablateJson;
  std::vector<std::string> ablateArchs, ablateFeatures;
  bool ablateStandard = false;
  ablate->add_option("--stat", ablateStat, "Stat metrics CSV")->required()->check(CLI::ExistingFile);
  ablate->add_option("--arch", ablateArchs, "Architecture (repeatable)");
  ablate->add_flag("--standard-set", ablateStandard, "Add the ten architectures of the standard ablation set");
  ablate->add_option("--features", ablateFeatures, "Stat metrics to use (default: every column)");
  ablate->add_option("--out", ablateOut, "Table output (default stdout)");
  ablate->add_option("--json", ablateJson, "Also write the rows as JSON");
  ablateFlags.add_to(ablate, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_code(ErrorCategory::Usage);
  }

  try {
    if (gen->parsed()) {
      synth::ScenarioSpec spec;
      if (!genScenario.empty()) {
        json j = read_json(genScenario);
        if (!j.contains("seed")) j["seed"] = seed;
        if (!j.contains("duration_minutes")) j["duration_minutes"] = genMinutes;
        spec = synth::scenario_from_json(j);
      } else {
        spec = synth::default_scenario(seed, genMinutes, genEvents);
        if (!genClean) spec.injections = synth::default_injections(genMinutes);
      }
      const synth::Dataset ds = synth::generate(spec);
      fs::create_directories(genOut);
      data::write_metrics(ds.stat, fs::path(genOut) / "stat.csv");
      data::write_metrics(ds.events, fs::path(genOut) / "events.csv");
      emit(report::dump_json(synth::labels_to_json(ds.labels)), (fs::path(genOut) / "labels.json").string());
      emit(report::dump_json(synth::scenario_to_json(spec)), (fs::path(genOut) / "scenario.json").string());
      std::cout << "wrote " << ds.stat.rows() << " minutes, " << ds.events.cols() << " events, "
                << ds.labels.size() << " labeled disorders to " << genOut << "\n";
    } else if (train->parsed()) {
      const data::MetricFrame raw = load_stat(trainStat, trainFeatures);
      const auto prep = detector::prepare_training_data(raw, trainFlags.steps, trainFlags.stride);
      const auto result = detector::train(prep.windows, prep.norm,
                                          detector::parse_architecture(trainFlags.arch),
                                          trainFlags.config(seed));
      detector::save_model(result.model, trainModel);
      if (!trainHistory.empty()) {
        std::ostringstream h;
        detector::write_history_csv(result.history, h);
        emit(h.str(), trainHistory);
      }
      std::cout << report::dump_json(training_summary(result));
    } else if (score->parsed()) {
      const detector::Model model = detector::load_model(scoreModel);
      const data::MetricFrame raw = data::load_metrics(scoreStat, data::MetricKind::Stat);
      data::require_same_features(model.features(), raw.names, "stat metrics");
      const auto scores = detector::score_frame(model, raw, scoreStride);
      emit(report::dump_json(detector::scores_to_json(scores)), scoreOut);
      if (!scoreCsv.empty()) {
        std::ostringstream c;
        detector::write_scores_csv(scores, c);
        emit(c.str(), scoreCsv);
      }
    } else if (detect->parsed()) {
      const auto scores = detector::scores_from_json(read_json(detectScores));
      const spc::ChartMode mode = chart_mode(detectFlags.chart);
      spc::DetectOptions options;
      if (mode == spc::ChartMode::Baseline) {
        if (detectModel.empty()) throw ConfigError("--chart baseline needs --model");
        const detector::Model model = detector::load_model(detectModel);
        data::require_same_features(model.features(), scores.featureNames, "scores");
        options = report::detect_options_for(model, mode, detectFlags.k, detectFlags.gap);
      } else {
        options.k = detectFlags.k;
        options.gapTolerance = detectFlags.gap;
      }
      const auto result = spc::detect(scores, options);
      emit(report::dump_json(spc::detection_to_json(result, detectFlags.top)), detectOut);
    } else if (match->parsed()) {
      const data::MetricFrame stat = data::load_metrics(matchStat, data::MetricKind::Stat);
      const data::MetricFrame events = data::load_metrics(matchEvents, data::MetricKind::Event);
      const auto options = matchFlags.options();
      if (!matchPeriods.empty()) {
        std::vector<spc::AnomalyPeriod> ranked;
        const json detection = read_json(matchPeriods);
        for (const auto& p : detection.at("periods")) ranked.push_back(spc::period_from_json(p));
        const auto results = report::match_periods(ranked, stat, events, options, matchTop);
        emit(report::dump_json(report::matches_to_json(ranked, results, matchFlags.topEvents)), matchOut);
      } else {
        if (matchFeature.empty() || matchStart.empty() || matchEnd.empty()) {
          throw ConfigError("match needs --periods, or --feature with --start and --end");
        }
        const auto result = similarity::match_events(stat, matchFeature, events,
                                                     timestamp_arg(matchStart, "--start"),
                                                     timestamp_arg(matchEnd, "--end"), options);
        emit(report::dump_json(similarity::match_to_json(result, matchFlags.topEvents)), matchOut);
      }
    } else if (rep->parsed()) {
      const detector::Model model = detector::load_model(repModel);
      const data::MetricFrame stat = data::load_metrics(repStat, data::MetricKind::Stat);
      const data::MetricFrame events = data::load_metrics(repEvents, data::MetricKind::Event);
      data::require_same_features(model.features(), stat.names, "stat metrics");
      report::ReportOptions options;
      options.stride = repStride;
      options.detect = report::detect_options_for(model, chart_mode(reportDetect.chart), reportDetect.k,
                                                  reportDetect.gap);
      options.match = reportMatch.options();
      options.topPeriods = reportDetect.top;
      options.topEvents = reportMatch.topEvents;
      options.plots = !repNoPlots;
      // Output locations are not part of the resolved configuration, so the
      // report depends only on the seed, the inputs and the settings.
      json resolved = cli::JsonConfig::to_json(rep, true);
      resolved.erase("out");
      resolved["seed"] = seed;
      const auto diagnosis = report::build_report(model, stat, events, options, resolved);
      report::write_report(diagnosis, repOut);
      std::cout << diagnosis.text;
    } else if (ablate->parsed()) {
      std::vector<std::string> archs = ablateArchs;
      if (ablateStandard) archs.insert(archs.end(), detector::kAblationArchitectures.begin(),
                                     detector::kAblationArchitectures.end());
      if (archs.empty()) throw ConfigError("ablate needs --arch or --standard-set");
      const data::MetricFrame raw = load_stat(ablateStat, ablateFeatures);
      const auto prep = detector::prepare_training_data(raw, ablateFlags.steps, ablateFlags.stride);
      const auto rows = detector::run_ablation(prep.windows, prep.norm, archs, ablateFlags.config(seed));
      emit(detector::format_ablation_table(rows), ablateOut);
      if (!ablateJson.empty()) {
        json j = json::array();
        for (const auto& r : rows) {
          j.push_back({{"architecture", r.architecture},
                       {"test_mse", r.testMse},
                       {"best_epoch", r.bestEpoch},
                       {"parameters", r.parameterCount}});
        }
        emit(report::dump_json(j), ablateJson);
      }
    }
  } catch (const Error& e) {
    std::cerr << "dbdiag: " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "dbdiag: internal error: " << e.what() << "\n";
    return exit_code(ErrorCategory::Internal);
  }
  return 0;
}
