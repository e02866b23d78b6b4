#pragma once

// Seeded synthetic DBMS metric scenarios with labeled injected disorders.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dbdiag/data.hpp"
#include "dbdiag/spc.hpp"

namespace dbdiag::synth {

enum class InjectionType { Spike, LevelShift, LockPileup };
std::string_view injection_name(InjectionType t);

/// level + trendPerDay * days + dailyAmplitude * sin(2 pi t / period + phase)
///   + workloadLoading * w(t) + N(0, noise^2)
/// where w is the scenario's shared workload process.
struct FeatureBaseline {
  double level = 100;
  double dailyAmplitude = 20;
  double dailyPeriodMinutes = 1440;
  double dailyPhase = 0;
  double trendPerDay = 0;
  double noiseSigma = 1;
  double workloadLoading = 0;
};

struct EventBaseline {
  std::string name;
  double level = 10;
  double dailyAmplitude = 2;
  double noiseSigma = 0.5;
};

struct Injection {
  InjectionType type = InjectionType::Spike;
  std::string feature;
  std::size_t startMinute = 0;
  std::size_t durationMinutes = 10;
  double magnitude = 1;
  std::vector<std::string> linkedEvents;
  std::size_t eventLagMinutes = 2;
  double eventGain = 1.0;  // event perturbation = gain * stat perturbation
};

struct ScenarioSpec {
  std::uint64_t seed = 0;
  std::size_t durationMinutes = 1440;
  data::Timestamp start = 1704067200;  // 2024-01-01T00:00:00Z
  std::vector<std::string> statFeatures = data::kDefaultStatMetrics;
  std::vector<FeatureBaseline> baselines;  // one per stat feature
  std::vector<EventBaseline> events;
  std::vector<Injection> injections;
  // LockPileup: fraction of the lock-wait perturbation added to Active Session.
  double lockCoupling = 1.0;
  // Shared workload: AR(1) with unit stationary variance and this lag-1
  // autocorrelation; it makes the stat metrics move together.
  double workloadPersistence = 0.98;
};

/// A non-stationary baseline (shared daily cycle, upward trend) for the
/// default stat features plus `eventCount` wait-event series. No injections.
ScenarioSpec default_scenario(std::uint64_t seed, std::size_t minutes, std::size_t eventCount = 8);

/// Three disorders of distinct size: an Active Session spike (the largest
/// relative to its feature's spread), a lock pileup and a Physical Reads level
/// shift, at 20%, 50% and 80% of the duration, each with one linked event.
/// Needs at least 120 minutes and the default features and events.
std::vector<Injection> default_injections(std::size_t minutes);

struct GroundTruth {
  InjectionType type = InjectionType::Spike;
  std::vector<std::string> features;
  data::Timestamp start = 0;
  data::Timestamp end = 0;  // exclusive
  double magnitude = 0;
  std::vector<std::string> linkedEvents;
  std::size_t eventLagMinutes = 0;
};

struct Dataset {
  data::MetricFrame stat;
  data::MetricFrame events;
  std::vector<GroundTruth> labels;
};

/// Pure function of the scenario. Throws ConfigError on invalid or overlapping
/// injections.
Dataset generate(const ScenarioSpec& spec);

/// Perturbation profile of an injection, one value per minute of its duration.
std::vector<double> injection_profile(const Injection& injection);

nlohmann::json scenario_to_json(const ScenarioSpec& spec);
ScenarioSpec scenario_from_json(const nlohmann::json& j);
nlohmann::json labels_to_json(std::span<const GroundTruth> labels);
std::vector<GroundTruth> labels_from_json(const nlohmann::json& j);

// --- detection scoring ----------------------------------------------------

/// Fraction of the truth interval covered by the period.
double overlap_fraction(const spc::AnomalyPeriod& period, const GroundTruth& truth);
/// A period hits a truth interval when it covers at least half of it.
bool is_hit(const spc::AnomalyPeriod& period, const GroundTruth& truth);

struct DetectionScore {
  std::size_t k = 0;
  bool top1Hit = false;
  double topKRecall = 0;     // truth intervals hit by some top-k period
  double topKPrecision = 0;  // top-k periods that hit some truth interval
  std::vector<double> bestOverlap;  // per truth interval, best overlap within top-k
};

DetectionScore evaluate_detection(std::span<const spc::AnomalyPeriod> rankedPeriods,
                                  std::span<const GroundTruth> truth, std::size_t k);

}  // namespace dbdiag::synth
