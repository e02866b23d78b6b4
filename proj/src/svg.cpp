#include "dbdiag/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace dbdiag::svg {

namespace {

constexpr double kWidth = 900, kHeight = 320;
constexpr double kLeft = 70, kRight = 160, kTop = 36, kBottom = 40;

const char* const kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd",
                                "#8c564b", "#e377c2", "#17becf", "#bcbd22"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Linear maps from data coordinates to the plot area.
struct Frame {
  double x0, x1, y0, y1;

  double px(double x) const {
    const double span = x1 > x0 ? x1 - x0 : 1.0;
    return kLeft + (x - x0) / span * (kWidth - kLeft - kRight);
  }
  double py(double y) const {
    const double span = y1 > y0 ? y1 - y0 : 1.0;
    return kHeight - kBottom - (y - y0) / span * (kHeight - kTop - kBottom);
  }
};

Frame fit_frame(double x0, double x1, double lo, double hi) {
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double pad = 0.05 * (hi - lo);
  return {x0, x1, lo - pad, hi + pad};
}

void open(std::ostringstream& o, std::string_view title) {
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kLeft << "\" y=\"20\" font-size=\"14\">" << escape(title) << "</text>\n";
}

void axes(std::ostringstream& o, const Frame& f, data::Timestamp t0, data::Timestamp t1) {
  const double bx = kLeft, by = kHeight - kBottom, ex = kWidth - kRight;
  o << "<line x1=\"" << num(bx) << "\" y1=\"" << num(by) << "\" x2=\"" << num(ex) << "\" y2=\""
    << num(by) << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << num(bx) << "\" y1=\"" << num(kTop) << "\" x2=\"" << num(bx) << "\" y2=\""
    << num(by) << "\" stroke=\"black\"/>\n";
  for (double y : {f.y0, 0.5 * (f.y0 + f.y1), f.y1}) {
    o << "<text x=\"" << num(bx - 6) << "\" y=\"" << num(f.py(y) + 4)
      << "\" text-anchor=\"end\">" << label(y) << "</text>\n";
  }
  o << "<text x=\"" << num(bx) << "\" y=\"" << num(by + 16) << "\">"
    << escape(data::format_timestamp(t0)) << "</text>\n"
    << "<text x=\"" << num(ex) << "\" y=\"" << num(by + 16) << "\" text-anchor=\"end\">"
    << escape(data::format_timestamp(t1)) << "</text>\n";
}

void polyline(std::ostringstream& o, const Frame& f, std::span<const double> xs,
              std::span<const double> ys, std::string_view color, double width) {
  o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << width
    << "\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) o << ' ';
    o << num(f.px(xs[i])) << ',' << num(f.py(ys[i]));
  }
  o << "\"/>\n";
}

void hline(std::ostringstream& o, const Frame& f, double y, std::string_view color,
           std::string_view name) {
  o << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(f.py(y)) << "\" x2=\""
    << num(kWidth - kRight) << "\" y2=\"" << num(f.py(y)) << "\" stroke=\"" << color
    << "\" stroke-dasharray=\"6,3\"/>\n"
    << "<text x=\"" << num(kWidth - kRight + 6) << "\" y=\"" << num(f.py(y) + 4) << "\" fill=\""
    << color << "\">" << escape(name) << ' ' << label(y) << "</text>\n";
}

}  // namespace

std::string score_chart(const detector::ScoreSeries& scores, std::size_t feature,
                        const spc::ControlChart& chart, std::span<const spc::AnomalyPeriod> periods) {
  std::ostringstream o;
  open(o, "Anomaly score: " + scores.featureNames.at(feature));
  const std::vector<double> ys = scores.feature_scores(feature);
  if (ys.empty()) {
    o << "</svg>\n";
    return o.str();
  }
  std::vector<double> xs;
  for (auto ts : scores.windowStarts) xs.push_back(static_cast<double>(ts));
  double lo = std::min(chart.lcl, *std::min_element(ys.begin(), ys.end()));
  double hi = std::max(chart.ucl, *std::max_element(ys.begin(), ys.end()));
  const Frame f = fit_frame(xs.front(), xs.back(), lo, hi);

  for (const auto& p : periods) {
    const double a = f.px(static_cast<double>(p.start));
    const double b = f.px(static_cast<double>(std::min<data::Timestamp>(p.end, scores.windowStarts.back())));
    o << "<rect x=\"" << num(a) << "\" y=\"" << num(kTop) << "\" width=\"" << num(std::max(b - a, 1.0))
      << "\" height=\"" << num(kHeight - kTop - kBottom) << "\" fill=\"#d62728\" fill-opacity=\"0.15\"/>\n";
  }
  axes(o, f, scores.windowStarts.front(), scores.windowStarts.back());
  polyline(o, f, xs, ys, kPalette[0], 1.0);
  hline(o, f, chart.ucl, "#d62728", "UCL");
  hline(o, f, chart.center, "#555555", "CL");
  hline(o, f, chart.lcl, "#d62728", "LCL");
  o << "</svg>\n";
  return o.str();
}

std::string period_overlay(const data::MetricFrame& stat, const data::MetricFrame& events,
                           const similarity::MatchResult& match, std::size_t topEvents) {
  std::ostringstream o;
  open(o, match.statFeature + " " + data::format_timestamp(match.sliceStart) + " - " +
              data::format_timestamp(match.sliceEnd));
  const auto col = stat.index_of(match.statFeature);
  std::vector<double> xs;
  std::vector<std::vector<double>> series;
  std::vector<std::string> names;
  if (col) {
    std::vector<double> ys;
    for (std::size_t r = 0; r < stat.rows(); ++r) {
      const auto ts = stat.timestamps[r];
      if (ts < match.sliceStart || ts >= match.sliceEnd) continue;
      if (!std::binary_search(events.timestamps.begin(), events.timestamps.end(), ts)) continue;
      xs.push_back(static_cast<double>(ts));
      ys.push_back(stat.at(r, *col));
    }
    series.push_back(similarity::z_normalize(ys));
    names.push_back(match.statFeature);
  }
  for (std::size_t k = 0; k < match.matches.size() && k < topEvents; ++k) {
    const auto c = events.index_of(match.matches[k].eventName);
    if (!c) continue;
    std::vector<double> ys;
    for (double x : xs) {
      const auto ts = static_cast<data::Timestamp>(x);
      const auto it = std::lower_bound(events.timestamps.begin(), events.timestamps.end(), ts);
      ys.push_back(events.at(static_cast<std::size_t>(it - events.timestamps.begin()), *c));
    }
    series.push_back(similarity::z_normalize(ys));
    names.push_back(match.matches[k].eventName);
  }
  if (xs.size() < 2) {
    o << "<text x=\"" << num(kLeft) << "\" y=\"" << num(kHeight / 2) << "\">no overlapping data</text>\n</svg>\n";
    return o.str();
  }
  double lo = 0.0, hi = 0.0;
  for (const auto& s : series) {
    for (double v : s) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  const Frame f = fit_frame(xs.front(), xs.back(), lo, hi);
  axes(o, f, static_cast<data::Timestamp>(xs.front()), static_cast<data::Timestamp>(xs.back()));
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = s == 0 ? "black" : kPalette[(s - 1) % std::size(kPalette)];
    polyline(o, f, xs, series[s], color, s == 0 ? 2.0 : 1.2);
    const double ly = kTop + 14.0 * static_cast<double>(s);
    o << "<line x1=\"" << num(kWidth - kRight + 6) << "\" y1=\"" << num(ly) << "\" x2=\""
      << num(kWidth - kRight + 22) << "\" y2=\"" << num(ly) << "\" stroke=\"" << color
      << "\" stroke-width=\"2\"/>\n"
      << "<text x=\"" << num(kWidth - kRight + 26) << "\" y=\"" << num(ly + 4) << "\">"
      << escape(names[s]) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace dbdiag::svg
