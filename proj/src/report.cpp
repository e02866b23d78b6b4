#include "dbdiag/report.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dbdiag/error.hpp"
#include "dbdiag/svg.hpp"

namespace dbdiag::report {

namespace {

std::string slug(std::string_view name) {
  std::string out;
  for (char c : name) {
    const auto u = static_cast<unsigned char>(c);
    out += std::isalnum(u) ? static_cast<char>(std::tolower(u)) : '_';
  }
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << contents;
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace

std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

std::string model_id(const detector::Model& model) {
  return detector::model_to_json(model).at("checksum").get<std::string>();
}

spc::DetectOptions detect_options_for(const detector::Model& model, spc::ChartMode mode, double k,
                                      std::size_t gapTolerance) {
  spc::DetectOptions o;
  o.k = k;
  o.gapTolerance = gapTolerance;
  o.mode = mode;
  if (mode == spc::ChartMode::Baseline) {
    if (model.training.baselineCenter.size() != model.features().size()) {
      throw ModelError("model has no baseline score moments for baseline control limits");
    }
    o.baselineCenter = model.training.baselineCenter;
    o.baselineSigma = model.training.baselineSigma;
  }
  return o;
}

std::vector<similarity::MatchResult> match_periods(std::span<const spc::AnomalyPeriod> ranked,
                                                   const data::MetricFrame& stat,
                                                   const data::MetricFrame& events,
                                                   const similarity::MatchOptions& options,
                                                   std::size_t topPeriods) {
  std::vector<similarity::MatchResult> out;
  for (std::size_t i = 0; i < ranked.size() && i < topPeriods; ++i) {
    const auto& p = ranked[i];
    out.push_back(similarity::match_events(stat, p.feature, events, p.start, p.end, options));
  }
  return out;
}

nlohmann::json matches_to_json(std::span<const spc::AnomalyPeriod> ranked,
                               std::span<const similarity::MatchResult> matches, std::size_t topEvents) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < matches.size(); ++i) {
    out.push_back({{"period_rank", ranked[i].rank},
                   {"result", similarity::match_to_json(matches[i], topEvents)}});
  }
  return out;
}

DiagnosisReport build_report(const detector::Model& model, const data::MetricFrame& stat,
                             const data::MetricFrame& events, const ReportOptions& options,
                             const nlohmann::json& resolvedConfig) {
  if (stat.rows() == 0) throw DataError("stat metrics are empty");
  const detector::ScoreSeries scores = detector::score_frame(model, stat, options.stride);
  const spc::DetectionResult detection = spc::detect(scores, options.detect);
  const auto matches = match_periods(detection.ranked, stat, events, options.match, options.topPeriods);

  DiagnosisReport report;
  nlohmann::json manifest = nlohmann::json::array();
  if (options.plots) {
    for (std::size_t j = 0; j < detection.features.size(); ++j) {
      const auto& fd = detection.features[j];
      const std::string file = "plots/score_" + slug(fd.chart.feature) + ".svg";
      report.files.emplace_back(file, svg::score_chart(scores, j, fd.chart, fd.periods));
      manifest.push_back({{"file", file}, {"kind", "score_chart"}, {"feature", fd.chart.feature}});
    }
    for (std::size_t i = 0; i < matches.size(); ++i) {
      const std::string file = "plots/period_" + std::to_string(detection.ranked[i].rank) + ".svg";
      report.files.emplace_back(file, svg::period_overlay(stat, events, matches[i], options.topEvents));
      manifest.push_back({{"file", file},
                          {"kind", "period_overlay"},
                          {"period_rank", detection.ranked[i].rank},
                          {"feature", matches[i].statFeature}});
    }
  }

  const std::string id = model_id(model);
  nlohmann::json metadata = {
      {"model_id", id},
      {"architecture", model.architecture.text},
      {"features", model.features()},
      {"steps", model.steps},
      {"data_range",
       {{"start", data::format_timestamp(stat.timestamps.front())},
        {"end", data::format_timestamp(stat.timestamps.back())},
        {"stat_rows", stat.rows()},
        {"event_rows", events.rows()},
        {"event_metrics", events.cols()},
        {"windows", scores.windows()}}},
      {"config", resolvedConfig}};
  report.document = {{"metadata", metadata},
                     {"detection", spc::detection_to_json(detection, options.topPeriods)},
                     {"matches", matches_to_json(detection.ranked, matches, options.topEvents)},
                     {"manifest", manifest}};

  std::ostringstream t;
  t << "DBMS diagnosis report\n"
    << "model " << id << " (" << model.architecture.text << "), T=" << model.steps << "\n"
    << "data " << data::format_timestamp(stat.timestamps.front()) << " .. "
    << data::format_timestamp(stat.timestamps.back()) << ", " << scores.windows() << " windows\n\n"
    << "Control charts (k=" << fixed(options.detect.k, 2) << ", "
    << (options.detect.mode == spc::ChartMode::SelfFit ? "self-fit" : "baseline") << ")\n";
  for (const auto& fd : detection.features) {
    t << "  " << fd.chart.feature << ": CL " << fixed(fd.chart.center, 6) << "  UCL "
      << fixed(fd.chart.ucl, 6) << "  LCL " << fixed(fd.chart.lcl, 6) << "  flagged "
      << fd.flagged.size() << "  periods " << fd.periods.size() << "\n";
  }
  t << "\nAnomaly periods (" << detection.ranked.size() << " total, top "
    << std::min(options.topPeriods, detection.ranked.size()) << " shown)\n";
  for (std::size_t i = 0; i < detection.ranked.size() && i < options.topPeriods; ++i) {
    const auto& p = detection.ranked[i];
    t << "  #" << p.rank << " " << p.feature << " " << data::format_timestamp(p.start) << " .. "
      << data::format_timestamp(p.end) << "  peak " << fixed(p.peakScore, 6);
    if (!p.alsoFlagged.empty()) {
      t << "  also:";
      for (const auto& f : p.alsoFlagged) t << " " << f;
    }
    t << "\n";
    if (i < matches.size()) {
      const auto& m = matches[i];
      for (const auto& w : m.warnings) t << "      warning: " << w << "\n";
      for (std::size_t k = 0; k < m.matches.size() && k < options.topEvents; ++k) {
        t << "      DTW #" << k + 1 << " " << m.matches[k].eventName << " ("
          << fixed(m.matches[k].dtwDistance, 4) << ")\n";
      }
      std::vector<const similarity::EventMatch*> byPearson;
      for (const auto& e : m.matches) byPearson.push_back(&e);
      std::sort(byPearson.begin(), byPearson.end(), [](auto* a, auto* b) {
        return a->rankByPearson < b->rankByPearson;
      });
      for (std::size_t k = 0; k < byPearson.size() && k < options.topEvents; ++k) {
        const auto& e = *byPearson[k];
        t << "      Pearson #" << k + 1 << " " << e.eventName << " ("
          << (e.pearson ? fixed(*e.pearson, 4) : std::string("undefined")) << ")\n";
      }
    }
  }
  if (!manifest.empty()) {
    t << "\nFiles\n";
    for (const auto& f : manifest) t << "  " << f.at("file").get<std::string>() << "\n";
  }
  report.text = t.str();
  return report;
}

void write_report(const DiagnosisReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / "report.json", dump_json(report.document));
  write_file(dir / "report.txt", report.text);
  for (const auto& [name, contents] : report.files) {
    const auto path = dir / name;
    std::filesystem::create_directories(path.parent_path());
    write_file(path, contents);
  }
}

}  // namespace dbdiag::report
