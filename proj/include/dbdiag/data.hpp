#pragma once

// Metric ingestion, global normalization, windowing and chronological splits.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dbdiag/nn.hpp"
#include "dbdiag/tensor.hpp"

namespace dbdiag::data {

/// Seconds since the Unix epoch (UTC).
using Timestamp = std::int64_t;
inline constexpr Timestamp kMinute = 60;

enum class MetricKind { Stat, Event };

/// The six stat metrics the detector is trained on by default.
inline const std::vector<std::string> kDefaultStatMetrics = {
    "CPU Used",       "Active Session", "Session Logical Reads",
    "Physical Reads", "Execute Counts", "Lock Waiting Session"};

/// Timestamped multivariate series at one-minute resolution.
struct MetricFrame {
  MetricKind kind = MetricKind::Stat;
  std::vector<std::string> names;
  std::vector<Timestamp> timestamps;
  std::vector<double> values;  // row-major [time, metric]

  std::size_t rows() const noexcept { return timestamps.size(); }
  std::size_t cols() const noexcept { return names.size(); }
  double at(std::size_t r, std::size_t c) const { return values[r * names.size() + c]; }
  std::span<const double> row(std::size_t r) const {
    return {values.data() + r * names.size(), names.size()};
  }
  std::vector<double> column(std::size_t c) const;
  std::optional<std::size_t> index_of(std::string_view name) const;

  friend bool operator==(const MetricFrame&, const MetricFrame&) = default;
};

/// Accepts epoch seconds ("1700000000") or ISO-8601 UTC
/// ("2024-01-01T00:05:00Z", "2024-01-01 00:05", optional seconds and "Z").
std::optional<Timestamp> parse_timestamp(std::string_view text);
/// "YYYY-MM-DDTHH:MM:SSZ"
std::string format_timestamp(Timestamp ts);

/// Reads `timestamp,<metric1>,...` CSV. Rows are sorted by timestamp.
/// Throws DataError naming the offending row (1-based, header excluded).
MetricFrame load_metrics(const std::filesystem::path& path, MetricKind kind);
MetricFrame parse_metrics(std::istream& in, MetricKind kind, std::string_view source = "<stream>");

void write_metrics(const MetricFrame& frame, std::ostream& out);
void write_metrics(const MetricFrame& frame, const std::filesystem::path& path);

/// Keeps the listed columns, in the listed order.
MetricFrame select_columns(const MetricFrame& frame, std::span<const std::string> names);

/// Per-feature whole-period moments (population std).
struct GlobalNorm {
  std::vector<std::string> names;
  std::vector<double> mean;
  std::vector<double> stdev;
};

GlobalNorm fit_global_norm(const MetricFrame& frame);
MetricFrame apply_global_norm(const MetricFrame& frame, const GlobalNorm& norm);

/// Throws DataError listing both name lists when they differ.
void require_same_features(std::span<const std::string> expected,
                           std::span<const std::string> found, std::string_view what);

enum class Split : std::uint8_t { Unassigned, Train, Validation, Test };
std::string_view split_name(Split s);

/// Fixed-length windows of consecutive minutes.
struct WindowSet {
  nn::WindowShape shape;
  std::vector<std::string> featureNames;
  Tensor windows;  // [count, steps * features], element t * features + j
  std::vector<std::size_t> startRows;
  std::vector<Timestamp> startTimestamps;
  std::size_t stride = 1;
  std::vector<Split> split;

  std::size_t size() const noexcept { return startRows.size(); }
  std::vector<std::size_t> indices(Split s) const;
  Tensor subset(Split s) const;
};

/// Row ranges [begin, end) with no missing minute inside.
std::vector<std::pair<std::size_t, std::size_t>> contiguous_segments(const MetricFrame& frame);

/// Windows never span a missing minute; the stride restarts in each segment.
WindowSet make_windows(const MetricFrame& frame, std::size_t steps, std::size_t stride = 1);

struct SplitFractions {
  double train = 0.6;
  double validation = 0.2;
  double test = 0.2;
};

/// Chronological split. Validation and test counts are floored; the
/// remainder goes to train.
WindowSet split_windows(WindowSet set, SplitFractions fractions = {});

}  // namespace dbdiag::data
