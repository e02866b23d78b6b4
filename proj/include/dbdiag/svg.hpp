#pragma once

// Self-contained SVG plots: per-feature score charts with control limits and
// per-period overlays of a stat metric with its best-matching events.

#include <span>
#include <string>

#include "dbdiag/data.hpp"
#include "dbdiag/detector.hpp"
#include "dbdiag/similarity.hpp"
#include "dbdiag/spc.hpp"

namespace dbdiag::svg {

/// Score series of one feature with CL/UCL/LCL lines; the feature's own
/// periods are shaded.
std::string score_chart(const detector::ScoreSeries& scores, std::size_t feature,
                        const spc::ControlChart& chart, std::span<const spc::AnomalyPeriod> periods);

/// Stat metric and the top `topEvents` events by DTW inside the match slice,
/// each z-normalized so shapes share one axis.
std::string period_overlay(const data::MetricFrame& stat, const data::MetricFrame& events,
                           const similarity::MatchResult& match, std::size_t topEvents);

}  // namespace dbdiag::svg
