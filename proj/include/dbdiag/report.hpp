#pragma once

// The automatic diagnosis report: score -> detect -> match for the top
// periods, rendered as JSON, plain text and SVG plots.

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dbdiag/data.hpp"
#include "dbdiag/detector.hpp"
#include "dbdiag/similarity.hpp"
#include "dbdiag/spc.hpp"

namespace dbdiag::report {

struct ReportOptions {
  std::size_t stride = 1;
  spc::DetectOptions detect;
  similarity::MatchOptions match;
  std::size_t topPeriods = 5;
  std::size_t topEvents = 5;
  bool plots = true;
};

/// Detect options for the model: baseline mode takes the model's stored
/// validation-score moments.
spc::DetectOptions detect_options_for(const detector::Model& model, spc::ChartMode mode, double k,
                                      std::size_t gapTolerance);

/// Matches events for the first `topPeriods` of the ranked periods.
std::vector<similarity::MatchResult> match_periods(std::span<const spc::AnomalyPeriod> ranked,
                                                   const data::MetricFrame& stat,
                                                   const data::MetricFrame& events,
                                                   const similarity::MatchOptions& options,
                                                   std::size_t topPeriods);

/// {"period_rank": r, "result": <match JSON>} for each matched period.
nlohmann::json matches_to_json(std::span<const spc::AnomalyPeriod> ranked,
                               std::span<const similarity::MatchResult> matches, std::size_t topEvents);

struct DiagnosisReport {
  nlohmann::json document;
  std::string text;
  std::vector<std::pair<std::string, std::string>> files;  // relative path, contents (plots)
};

/// The model id is the checksum of the serialized model.
std::string model_id(const detector::Model& model);

DiagnosisReport build_report(const detector::Model& model, const data::MetricFrame& stat,
                             const data::MetricFrame& events, const ReportOptions& options,
                             const nlohmann::json& resolvedConfig = nlohmann::json::object());

/// Writes report.json, report.txt and the plot files under `dir`.
void write_report(const DiagnosisReport& report, const std::filesystem::path& dir);

/// Two-space indented JSON with a trailing newline; the byte format of every
/// JSON file the tools emit.
std::string dump_json(const nlohmann::json& j);

}  // namespace dbdiag::report
