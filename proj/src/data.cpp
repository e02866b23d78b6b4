#include "dbdiag/data.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dbdiag/error.hpp"

namespace dbdiag::data {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Comma-separated fields; a field may be wrapped in double quotes ("" escapes a quote).
std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        field += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.emplace_back(trim(field));
      field.clear();
    } else {
      field += ch;
    }
  }
  out.emplace_back(trim(field));
  return out;
}

std::string quote_csv(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

std::vector<double> MetricFrame::column(std::size_t c) const {
  std::vector<double> out(rows());
  for (std::size_t r = 0; r < rows(); ++r) out[r] = at(r, c);
  return out;
}

std::optional<std::size_t> MetricFrame::index_of(std::string_view name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names.begin());
}

std::optional<Timestamp> parse_timestamp(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  const bool numeric = std::all_of(text.begin() + (text.front() == '-' ? 1 : 0), text.end(),
                                   [](char c) { return c >= '0' && c <= '9'; });
  if (numeric) {
    Timestamp v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
    return v;
  }

  const std::string s(text);
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  char sep = 0;
  int consumed = 0;
  int n = std::sscanf(s.c_str(), "%4d-%2d-%2d%c%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi, &consumed);
  if (n < 6 || (sep != 'T' && sep != ' ')) return std::nullopt;
  std::string_view rest = std::string_view(s).substr(static_cast<std::size_t>(consumed));
  if (!rest.empty() && rest.front() == ':') {
    int used = 0;
    if (std::sscanf(std::string(rest).c_str(), ":%2d%n", &sec, &used) != 1) return std::nullopt;
    rest.remove_prefix(static_cast<std::size_t>(used));
  }
  if (rest == "Z" || rest == "+00:00") rest = {};
  if (!rest.empty()) return std::nullopt;

  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec > 59 || h < 0 || mi < 0 || sec < 0) return std::nullopt;
  const auto tp = sys_days{ymd} + hours{h} + minutes{mi} + seconds{sec};
  return tp.time_since_epoch().count();
}

std::string format_timestamp(Timestamp ts) {
  using namespace std::chrono;
  const sys_seconds tp{seconds{ts}};
  const auto dp = floor<days>(tp);
  const year_month_day ymd{dp};
  const hh_mm_ss hms{tp - dp};
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

MetricFrame parse_metrics(std::istream& in, MetricKind kind, std::string_view source) {
  const std::string src(source);
  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) {
    throw DataError(src + ": empty metrics file (expected a 'timestamp,...' header)");
  }
  auto header = split_csv(line);
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);
  if (header.size() < 2 || header[0] != "timestamp") {
    throw DataError(src + ": header must start with 'timestamp' followed by metric names");
  }

  MetricFrame frame;
  frame.kind = kind;
  frame.names.assign(header.begin() + 1, header.end());
  for (std::size_t i = 0; i < frame.names.size(); ++i) {
    if (frame.names[i].empty()) throw DataError(src + ": empty metric name in header");
    for (std::size_t k = 0; k < i; ++k) {
      if (frame.names[k] == frame.names[i]) {
        throw DataError(src + ": duplicate metric name '" + frame.names[i] + "'");
      }
    }
  }

  struct Row {
    Timestamp ts;
    std::size_t number;
    std::vector<double> values;
  };
  std::vector<Row> rows;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++number;
    const auto fields = split_csv(line);
    const std::string where = src + ": row " + std::to_string(number);
    if (fields.size() != header.size()) {
      throw DataError(where + ": expected " + std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    }
    const auto ts = parse_timestamp(fields[0]);
    if (!ts) throw DataError(where + ": cannot parse timestamp '" + fields[0] + "'");
    if (*ts % kMinute != 0) {
      throw DataError(where + ": timestamp '" + fields[0] + "' is not on a minute boundary");
    }
    Row r{*ts, number, {}};
    r.values.reserve(frame.names.size());
    for (std::size_t c = 1; c < fields.size(); ++c) {
      const auto v = parse_double(fields[c]);
      if (!v) {
        throw DataError(where + ", column '" + frame.names[c - 1] + "': non-numeric value '" +
                        fields[c] + "'");
      }
      r.values.push_back(*v);
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw DataError(src + ": no data rows");

  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.ts < b.ts; });
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].ts == rows[i - 1].ts) {
      throw DataError(src + ": row " + std::to_string(rows[i].number) + ": duplicate timestamp " +
                      format_timestamp(rows[i].ts) + " (also at row " +
                      std::to_string(rows[i - 1].number) + ")");
    }
  }
  frame.timestamps.reserve(rows.size());
  frame.values.reserve(rows.size() * frame.names.size());
  for (const Row& r : rows) {
    frame.timestamps.push_back(r.ts);
    frame.values.insert(frame.values.end(), r.values.begin(), r.values.end());
  }
  return frame;
}

MetricFrame load_metrics(const std::filesystem::path& path, MetricKind kind) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open metrics file " + path.string());
  return parse_metrics(in, kind, path.string());
}

void write_metrics(const MetricFrame& frame, std::ostream& out) {
  out << "timestamp";
  for (const auto& n : frame.names) out << ',' << quote_csv(n);
  out << '\n';
  for (std::size_t r = 0; r < frame.rows(); ++r) {
    out << format_timestamp(frame.timestamps[r]);
    for (double v : frame.row(r)) out << ',' << format_double(v);
    out << '\n';
  }
}

void write_metrics(const MetricFrame& frame, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write metrics file " + path.string());
  write_metrics(frame, out);
}

MetricFrame select_columns(const MetricFrame& frame, std::span<const std::string> names) {
  std::vector<std::size_t> idx;
  for (const auto& n : names) {
    const auto i = frame.index_of(n);
    if (!i) require_same_features(names, frame.names, "metric frame");
    idx.push_back(*i);
  }
  MetricFrame out;
  out.kind = frame.kind;
  out.names.assign(names.begin(), names.end());
  out.timestamps = frame.timestamps;
  out.values.reserve(frame.rows() * idx.size());
  for (std::size_t r = 0; r < frame.rows(); ++r) {
    for (std::size_t c : idx) out.values.push_back(frame.at(r, c));
  }
  return out;
}

void require_same_features(std::span<const std::string> expected,
                           std::span<const std::string> found, std::string_view what) {
  if (std::equal(expected.begin(), expected.end(), found.begin(), found.end())) return;
  auto join = [](std::span<const std::string> v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", '" : "'") + v[i] + "'";
    return s + "]";
  };
  throw DataError(std::string(what) + ": feature mismatch; expected " + join(expected) +
                  ", found " + join(found));
}

GlobalNorm fit_global_norm(const MetricFrame& frame) {
  if (frame.rows() == 0 || frame.cols() == 0) throw DataError("cannot normalize an empty frame");
  GlobalNorm norm;
  norm.names = frame.names;
  const double n = static_cast<double>(frame.rows());
  for (std::size_t c = 0; c < frame.cols(); ++c) {
    const auto col = frame.column(c);
    const double mean = std::accumulate(col.begin(), col.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : col) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / n);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
      throw ConfigError("feature '" + frame.names[c] + "' has zero variance and cannot be normalized");
    }
    norm.mean.push_back(mean);
    norm.stdev.push_back(sd);
  }
  return norm;
}

MetricFrame apply_global_norm(const MetricFrame& frame, const GlobalNorm& norm) {
  require_same_features(norm.names, frame.names, "global normalization");
  MetricFrame out = frame;
  const std::size_t cols = frame.cols();
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const std::size_t c = i % cols;
    out.values[i] = (out.values[i] - norm.mean[c]) / norm.stdev[c];
  }
  return out;
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
    case Split::Unassigned: return "unassigned";
  }
  return "?";
}

std::vector<std::size_t> WindowSet::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] == s) out.push_back(i);
  }
  return out;
}

Tensor WindowSet::subset(Split s) const {
  const auto idx = indices(s);
  return windows.gather_rows(idx);
}

std::vector<std::pair<std::size_t, std::size_t>> contiguous_segments(const MetricFrame& frame) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t begin = 0;
  for (std::size_t r = 1; r <= frame.rows(); ++r) {
    if (r == frame.rows() || frame.timestamps[r] - frame.timestamps[r - 1] != kMinute) {
      if (r > begin) out.emplace_back(begin, r);
      begin = r;
    }
  }
  return out;
}

WindowSet make_windows(const MetricFrame& frame, std::size_t steps, std::size_t stride) {
  if (steps == 0 || stride == 0) throw ConfigError("window length and stride must be positive");
  if (frame.rows() < steps) {
    throw DataError("series of " + std::to_string(frame.rows()) +
                    " minutes is shorter than the window length " + std::to_string(steps));
  }
  WindowSet set;
  set.shape = {steps, frame.cols()};
  set.featureNames = frame.names;
  set.stride = stride;
  for (const auto& [begin, end] : contiguous_segments(frame)) {
    for (std::size_t s = begin; s + steps <= end; s += stride) {
      set.startRows.push_back(s);
      set.startTimestamps.push_back(frame.timestamps[s]);
    }
  }
  if (set.startRows.empty()) {
    throw DataError("no gap-free stretch of " + std::to_string(steps) + " minutes in the series");
  }
  const std::size_t width = set.shape.width();
  set.windows = Tensor({set.startRows.size(), width});
  for (std::size_t w = 0; w < set.startRows.size(); ++w) {
    const double* src = frame.values.data() + set.startRows[w] * frame.cols();
    std::copy(src, src + width, set.windows.data() + w * width);
  }
  set.split.assign(set.startRows.size(), Split::Unassigned);
  return set;
}

WindowSet split_windows(WindowSet set, SplitFractions f) {
  if (f.train < 0 || f.validation < 0 || f.test < 0 ||
      std::abs(f.train + f.validation + f.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be nonnegative and sum to 1");
  }
  const std::size_t n = set.size();
  const auto nVal = static_cast<std::size_t>(std::floor(static_cast<double>(n) * f.validation));
  const auto nTest = static_cast<std::size_t>(std::floor(static_cast<double>(n) * f.test));
  const std::size_t nTrain = n - nVal - nTest;
  if (nTrain == 0 || nVal == 0 || nTest == 0) {
    throw ConfigError("split of " + std::to_string(n) + " windows leaves an empty set (train " +
                      std::to_string(nTrain) + ", validation " + std::to_string(nVal) +
                      ", test " + std::to_string(nTest) + ")");
  }
  for (std::size_t i = 0; i < n; ++i) {
    set.split[i] = i < nTrain ? Split::Train : (i < nTrain + nVal ? Split::Validation : Split::Test);
  }
  return set;
}

}  // namespace dbdiag::data
