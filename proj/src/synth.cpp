#include "dbdiag/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include "dbdiag/error.hpp"

namespace dbdiag::synth {

namespace {

const std::vector<std::string> kEventNames = {
    "direct path read",       "db file sequential read",       "log file sync",
    "enq: TX - row lock contention", "latch: cache buffers chains", "SQL*Net message from client",
    "LGWR wait for redo copy", "buffer busy waits",            "db file scattered read",
    "library cache lock"};

const std::string kActiveSession = "Active Session";
const std::string kLockWaiting = "Lock Waiting Session";

// Nominal baselines for the default stat metrics: level, daily amplitude,
// trend per day, noise sigma, workload loading.
struct Nominal {
  double level, amplitude, trend, noise, workload;
};
const std::map<std::string, Nominal> kNominal = {
    {"CPU Used", {40, 15, 1.0, 1.5, 6}},
    {"Active Session", {20, 8, 0.5, 1.0, 3}},
    {"Session Logical Reads", {50000, 15000, 800, 1500, 6000}},
    {"Physical Reads", {2000, 600, 40, 80, 240}},
    {"Execute Counts", {8000, 2500, 150, 250, 1000}},
    {"Lock Waiting Session", {2, 0.6, 0.05, 0.15, 0.25}},
};

InjectionType injection_from_name(const std::string& s) {
  for (auto t : {InjectionType::Spike, InjectionType::LevelShift, InjectionType::LockPileup}) {
    if (injection_name(t) == s) return t;
  }
  throw ConfigError("unknown injection type '" + s + "'");
}

std::string resolved_feature(const Injection& inj) {
  if (inj.type == InjectionType::LockPileup && inj.feature.empty()) return kLockWaiting;
  return inj.feature;
}

// Features touched by an injection; a lock pileup also lifts Active Session.
std::vector<std::string> affected_features(const Injection& inj, const ScenarioSpec& spec) {
  std::vector<std::string> out{resolved_feature(inj)};
  if (inj.type == InjectionType::LockPileup && spec.lockCoupling != 0.0 && out[0] != kActiveSession &&
      std::find(spec.statFeatures.begin(), spec.statFeatures.end(), kActiveSession) !=
          spec.statFeatures.end()) {
    out.push_back(kActiveSession);
  }
  return out;
}

void validate(const ScenarioSpec& spec, const std::vector<std::string>& eventNames) {
  if (spec.durationMinutes == 0) throw ConfigError("scenario duration must be positive");
  if (!(spec.workloadPersistence >= 0.0 && spec.workloadPersistence < 1.0)) {
    throw ConfigError("workload persistence must lie in [0, 1)");
  }
  if (spec.statFeatures.empty()) throw ConfigError("scenario needs at least one stat feature");
  if (spec.baselines.size() != spec.statFeatures.size()) {
    throw ConfigError("scenario needs one baseline per stat feature");
  }
  std::map<std::string, std::vector<std::pair<std::size_t, std::size_t>>> busy;
  for (std::size_t i = 0; i < spec.injections.size(); ++i) {
    const Injection& inj = spec.injections[i];
    const std::string where = "injection " + std::to_string(i) + " (" +
                              std::string(injection_name(inj.type)) + ")";
    const std::string feature = resolved_feature(inj);
    if (std::find(spec.statFeatures.begin(), spec.statFeatures.end(), feature) ==
        spec.statFeatures.end()) {
      throw ConfigError(where + ": unknown stat feature '" + feature + "'");
    }
    if (!(inj.magnitude > 0)) throw ConfigError(where + ": magnitude must be positive");
    if (inj.durationMinutes == 0) throw ConfigError(where + ": duration must be positive");
    if (inj.startMinute + inj.durationMinutes > spec.durationMinutes) {
      throw ConfigError(where + ": extends past the end of the scenario");
    }
    for (const auto& e : inj.linkedEvents) {
      if (std::find(eventNames.begin(), eventNames.end(), e) == eventNames.end()) {
        throw ConfigError(where + ": unknown linked event '" + e + "'");
      }
    }
    for (const auto& f : affected_features(inj, spec)) {
      const std::size_t a = inj.startMinute, b = inj.startMinute + inj.durationMinutes;
      for (const auto& [s, e] : busy[f]) {
        if (a < e && s < b) throw ConfigError(where + ": overlaps another injection on '" + f + "'");
      }
      busy[f].emplace_back(a, b);
    }
  }
}

}  // namespace

std::string_view injection_name(InjectionType t) {
  switch (t) {
    case InjectionType::Spike: return "spike";
    case InjectionType::LevelShift: return "level_shift";
    case InjectionType::LockPileup: return "lock_pileup";
  }
  return "?";
}

ScenarioSpec default_scenario(std::uint64_t seed, std::size_t minutes, std::size_t eventCount) {
  ScenarioSpec spec;
  spec.seed = seed;
  spec.durationMinutes = minutes;
  // Per-system variation of levels so two seeds look like two different DBMSs.
  std::mt19937_64 rng(seed ^ 0xD1B54A32D192ED03ULL);
  std::uniform_real_distribution<double> jitter(0.8, 1.25);
  std::uniform_real_distribution<double> phase(-0.3, 0.3);
  const double sharedPhase = phase(rng);
  for (const auto& f : spec.statFeatures) {
    const Nominal n = kNominal.at(f);
    const double scale = jitter(rng);
    FeatureBaseline b;
    b.level = n.level * scale;
    b.dailyAmplitude = n.amplitude * scale;
    b.trendPerDay = n.trend * scale;
    b.noiseSigma = n.noise * scale;
    b.workloadLoading = n.workload * scale;
    b.dailyPhase = sharedPhase;
    spec.baselines.push_back(b);
  }
  for (std::size_t e = 0; e < eventCount; ++e) {
    EventBaseline ev;
    ev.name = e < kEventNames.size() ? kEventNames[e]
                                     : "event " + std::to_string(e - kEventNames.size() + 1);
    ev.level = 5.0 + 10.0 * static_cast<double>(e % 5) * jitter(rng);
    ev.dailyAmplitude = 0.2 * ev.level;
    ev.noiseSigma = 0.05 * ev.level;
    spec.events.push_back(ev);
  }
  return spec;
}

std::vector<Injection> default_injections(std::size_t minutes) {
  if (minutes < 120) throw ConfigError("default injections need at least 120 minutes");
  Injection spike;
  spike.type = InjectionType::Spike;
  spike.feature = kActiveSession;
  spike.startMinute = minutes / 5;
  spike.durationMinutes = 10;
  spike.magnitude = 120;
  spike.linkedEvents = {"direct path read"};
  Injection lock;
  lock.type = InjectionType::LockPileup;
  lock.feature = kLockWaiting;
  lock.startMinute = minutes / 2;
  lock.durationMinutes = 15;
  lock.magnitude = 6;
  lock.linkedEvents = {"enq: TX - row lock contention"};
  lock.eventGain = 5;
  Injection shift;
  shift.type = InjectionType::LevelShift;
  shift.feature = "Physical Reads";
  shift.startMinute = minutes * 4 / 5;
  shift.durationMinutes = 20;
  shift.magnitude = 1500;
  shift.linkedEvents = {"db file sequential read"};
  shift.eventLagMinutes = 1;
  shift.eventGain = 0.02;
  return {spike, lock, shift};
}

std::vector<double> injection_profile(const Injection& inj) {
  std::vector<double> p(inj.durationMinutes);
  const double d = static_cast<double>(inj.durationMinutes);
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double x = static_cast<double>(k);
    switch (inj.type) {
      case InjectionType::Spike: p[k] = inj.magnitude * (1.0 - x / d); break;  // sharp rise, linear decay
      case InjectionType::LevelShift: p[k] = inj.magnitude; break;
      case InjectionType::LockPileup: p[k] = inj.magnitude * (x + 1.0) / d; break;  // builds up, then clears
    }
  }
  return p;
}

Dataset generate(const ScenarioSpec& spec) {
  std::vector<std::string> eventNames;
  for (const auto& e : spec.events) eventNames.push_back(e.name);
  validate(spec, eventNames);

  const std::size_t n = spec.durationMinutes;
  const std::size_t nf = spec.statFeatures.size();
  const std::size_t ne = spec.events.size();
  Dataset ds;
  ds.stat.kind = data::MetricKind::Stat;
  ds.stat.names = spec.statFeatures;
  ds.stat.values.resize(n * nf);
  ds.events.kind = data::MetricKind::Event;
  ds.events.names = eventNames;
  ds.events.values.resize(n * ne);
  for (std::size_t t = 0; t < n; ++t) {
    const auto ts = spec.start + static_cast<data::Timestamp>(t) * data::kMinute;
    ds.stat.timestamps.push_back(ts);
    ds.events.timestamps.push_back(ts);
  }

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  const double phi = spec.workloadPersistence;
  const double innovation = std::sqrt(1.0 - phi * phi);
  double workload = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double minute = static_cast<double>(t);
    if (phi != 0.0 || innovation != 0.0) workload = phi * workload + innovation * gauss(rng);
    for (std::size_t j = 0; j < nf; ++j) {
      const FeatureBaseline& b = spec.baselines[j];
      double v = b.level + b.trendPerDay * minute / 1440.0 +
                 b.dailyAmplitude * std::sin(kTwoPi * minute / b.dailyPeriodMinutes + b.dailyPhase);
      v += b.workloadLoading * workload;
      if (b.noiseSigma > 0) v += b.noiseSigma * gauss(rng);
      ds.stat.values[t * nf + j] = v;
    }
    for (std::size_t e = 0; e < ne; ++e) {
      const EventBaseline& b = spec.events[e];
      double v = b.level + b.dailyAmplitude * std::sin(kTwoPi * minute / 1440.0);
      if (b.noiseSigma > 0) v += b.noiseSigma * gauss(rng);
      ds.events.values[t * ne + e] = v;
    }
  }

  for (const Injection& inj : spec.injections) {
    const auto profile = injection_profile(inj);
    const auto features = affected_features(inj, spec);
    for (std::size_t fi = 0; fi < features.size(); ++fi) {
      const std::size_t j = *ds.stat.index_of(features[fi]);
      const double gain = fi == 0 ? 1.0 : spec.lockCoupling;
      for (std::size_t k = 0; k < profile.size(); ++k) {
        ds.stat.values[(inj.startMinute + k) * nf + j] += gain * profile[k];
      }
    }
    for (const auto& name : inj.linkedEvents) {
      const std::size_t e = *ds.events.index_of(name);
      for (std::size_t k = 0; k < profile.size(); ++k) {
        const std::size_t t = inj.startMinute + inj.eventLagMinutes + k;
        if (t < n) ds.events.values[t * ne + e] += inj.eventGain * profile[k];
      }
    }
    GroundTruth g;
    g.type = inj.type;
    g.features = features;
    g.start = spec.start + static_cast<data::Timestamp>(inj.startMinute) * data::kMinute;
    g.end = g.start + static_cast<data::Timestamp>(inj.durationMinutes) * data::kMinute;
    g.magnitude = inj.magnitude;
    g.linkedEvents = inj.linkedEvents;
    g.eventLagMinutes = inj.eventLagMinutes;
    ds.labels.push_back(std::move(g));
  }
  return ds;
}

nlohmann::json scenario_to_json(const ScenarioSpec& spec) {
  nlohmann::json baselines = nlohmann::json::array();
  for (const auto& b : spec.baselines) {
    baselines.push_back({{"level", b.level},
                         {"daily_amplitude", b.dailyAmplitude},
                         {"daily_period_minutes", b.dailyPeriodMinutes},
                         {"daily_phase", b.dailyPhase},
                         {"trend_per_day", b.trendPerDay},
                         {"noise_sigma", b.noiseSigma},
                         {"workload_loading", b.workloadLoading}});
  }
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : spec.events) {
    events.push_back({{"name", e.name},
                      {"level", e.level},
                      {"daily_amplitude", e.dailyAmplitude},
                      {"noise_sigma", e.noiseSigma}});
  }
  nlohmann::json injections = nlohmann::json::array();
  for (const auto& i : spec.injections) {
    injections.push_back({{"type", std::string(injection_name(i.type))},
                          {"feature", i.feature},
                          {"start_minute", i.startMinute},
                          {"duration_minutes", i.durationMinutes},
                          {"magnitude", i.magnitude},
                          {"linked_events", i.linkedEvents},
                          {"event_lag_minutes", i.eventLagMinutes},
                          {"event_gain", i.eventGain}});
  }
  return {{"seed", spec.seed},
          {"duration_minutes", spec.durationMinutes},
          {"start", data::format_timestamp(spec.start)},
          {"stat_features", spec.statFeatures},
          {"baselines", baselines},
          {"events", events},
          {"injections", injections},
          {"lock_coupling", spec.lockCoupling},
          {"workload_persistence", spec.workloadPersistence}};
}

ScenarioSpec scenario_from_json(const nlohmann::json& j) {
  try {
    ScenarioSpec s;
    s.seed = j.value("seed", std::uint64_t{0});
    s.durationMinutes = j.value("duration_minutes", std::size_t{1440});
    if (j.contains("start")) {
      const auto ts = data::parse_timestamp(j.at("start").get<std::string>());
      if (!ts) throw ConfigError("scenario start is not a valid timestamp");
      s.start = *ts;
    }
    // Unspecified baselines fall back to the seeded default scenario.
    const ScenarioSpec defaults =
        default_scenario(s.seed, s.durationMinutes,
                         j.contains("event_count") ? j.at("event_count").get<std::size_t>() : 8);
    s.statFeatures = j.value("stat_features", defaults.statFeatures);
    if (j.contains("baselines")) {
      for (const auto& b : j.at("baselines")) {
        FeatureBaseline fb;
        fb.level = b.value("level", fb.level);
        fb.dailyAmplitude = b.value("daily_amplitude", fb.dailyAmplitude);
        fb.dailyPeriodMinutes = b.value("daily_period_minutes", fb.dailyPeriodMinutes);
        fb.dailyPhase = b.value("daily_phase", fb.dailyPhase);
        fb.trendPerDay = b.value("trend_per_day", fb.trendPerDay);
        fb.noiseSigma = b.value("noise_sigma", fb.noiseSigma);
        fb.workloadLoading = b.value("workload_loading", fb.workloadLoading);
        s.baselines.push_back(fb);
      }
    } else {
      s.baselines = defaults.baselines;
    }
    if (j.contains("events")) {
      for (const auto& e : j.at("events")) {
        EventBaseline eb;
        eb.name = e.at("name").get<std::string>();
        eb.level = e.value("level", eb.level);
        eb.dailyAmplitude = e.value("daily_amplitude", eb.dailyAmplitude);
        eb.noiseSigma = e.value("noise_sigma", eb.noiseSigma);
        s.events.push_back(eb);
      }
    } else {
      s.events = defaults.events;
    }
    for (const auto& i : j.value("injections", nlohmann::json::array())) {
      Injection inj;
      inj.type = injection_from_name(i.at("type").get<std::string>());
      inj.feature = i.value("feature", std::string{});
      inj.startMinute = i.at("start_minute").get<std::size_t>();
      inj.durationMinutes = i.at("duration_minutes").get<std::size_t>();
      inj.magnitude = i.at("magnitude").get<double>();
      inj.linkedEvents = i.value("linked_events", std::vector<std::string>{});
      inj.eventLagMinutes = i.value("event_lag_minutes", inj.eventLagMinutes);
      inj.eventGain = i.value("event_gain", inj.eventGain);
      s.injections.push_back(inj);
    }
    s.lockCoupling = j.value("lock_coupling", s.lockCoupling);
    s.workloadPersistence = j.value("workload_persistence", s.workloadPersistence);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed scenario: ") + e.what());
  }
}

nlohmann::json labels_to_json(std::span<const GroundTruth> labels) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& g : labels) {
    out.push_back({{"type", std::string(injection_name(g.type))},
                   {"features", g.features},
                   {"start", data::format_timestamp(g.start)},
                   {"end", data::format_timestamp(g.end)},
                   {"magnitude", g.magnitude},
                   {"linked_events", g.linkedEvents},
                   {"event_lag_minutes", g.eventLagMinutes}});
  }
  return out;
}

std::vector<GroundTruth> labels_from_json(const nlohmann::json& j) {
  try {
    std::vector<GroundTruth> out;
    for (const auto& l : j) {
      GroundTruth g;
      g.type = injection_from_name(l.at("type").get<std::string>());
      g.features = l.at("features").get<std::vector<std::string>>();
      const auto s = data::parse_timestamp(l.at("start").get<std::string>());
      const auto e = data::parse_timestamp(l.at("end").get<std::string>());
      if (!s || !e) throw DataError("bad label timestamp");
      g.start = *s;
      g.end = *e;
      g.magnitude = l.at("magnitude").get<double>();
      g.linkedEvents = l.value("linked_events", std::vector<std::string>{});
      g.eventLagMinutes = l.value("event_lag_minutes", std::size_t{0});
      out.push_back(std::move(g));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed labels: ") + e.what());
  }
}

double overlap_fraction(const spc::AnomalyPeriod& period, const GroundTruth& truth) {
  const auto lo = std::max(period.start, truth.start);
  const auto hi = std::min(period.end, truth.end);
  if (hi <= lo || truth.end <= truth.start) return 0.0;
  return static_cast<double>(hi - lo) / static_cast<double>(truth.end - truth.start);
}

bool is_hit(const spc::AnomalyPeriod& period, const GroundTruth& truth) {
  return overlap_fraction(period, truth) >= 0.5;
}

DetectionScore evaluate_detection(std::span<const spc::AnomalyPeriod> ranked,
                                  std::span<const GroundTruth> truth, std::size_t k) {
  DetectionScore s;
  s.k = k;
  const std::size_t top = std::min(k, ranked.size());
  s.bestOverlap.assign(truth.size(), 0.0);
  std::size_t truthHit = 0;
  for (std::size_t t = 0; t < truth.size(); ++t) {
    bool hit = false;
    for (std::size_t p = 0; p < top; ++p) {
      s.bestOverlap[t] = std::max(s.bestOverlap[t], overlap_fraction(ranked[p], truth[t]));
      hit = hit || is_hit(ranked[p], truth[t]);
    }
    truthHit += hit ? 1 : 0;
  }
  std::size_t periodHit = 0;
  for (std::size_t p = 0; p < top; ++p) {
    const bool hit = std::any_of(truth.begin(), truth.end(),
                                 [&](const GroundTruth& g) { return is_hit(ranked[p], g); });
    periodHit += hit ? 1 : 0;
    if (p == 0) s.top1Hit = hit;
  }
  s.topKRecall = truth.empty() ? 1.0 : static_cast<double>(truthHit) / static_cast<double>(truth.size());
  s.topKPrecision = top == 0 ? 0.0 : static_cast<double>(periodHit) / static_cast<double>(top);
  return s;
}

}  // namespace dbdiag::synth
