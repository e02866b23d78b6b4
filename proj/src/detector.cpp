#include "dbdiag/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "dbdiag/error.hpp"
#include "dbdiag/kernels.hpp"

namespace dbdiag::detector {

namespace {

constexpr std::size_t kEvalChunk = 1024;

// Per-element MSE of the network over `x`, evaluated in inference mode.
double evaluate_mse(const nn::Network& net, const Tensor& x) {
  const std::size_t n = x.rows();
  const std::size_t w = x.row_width();
  double sum = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < n; begin += kEvalChunk) {
    const std::size_t end = std::min(n, begin + kEvalChunk);
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    const Tensor chunk = x.gather_rows(idx);
    const Tensor y = net.infer(chunk);
    sum += kernels::active().sum_sq_diff(y.data(), chunk.data(), chunk.size());
  }
  return sum / static_cast<double>(n * w);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<double> sample_mean_sigma(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0};
}

}  // namespace

TrainResult train(const data::WindowSet& set, const data::GlobalNorm& norm,
                  const ArchitectureSpec& arch, const TrainConfig& config) {
  if (config.learningRate <= 0 || config.l2Lambda < 0 || config.batchSize == 0 ||
      config.maxEpochs == 0) {
    throw ConfigError("training configuration values must be positive");
  }
  data::require_same_features(norm.names, set.featureNames, "training windows");
  const auto trainIdx = set.indices(data::Split::Train);
  const Tensor validation = set.subset(data::Split::Validation);
  if (trainIdx.empty() || validation.rows() == 0) {
    throw ConfigError("training needs nonempty train and validation splits");
  }

  Model model;
  model.architecture = arch;
  model.norm = norm;
  model.steps = set.shape.steps;
  model.network = build_network(arch, set.shape, config.seed);
  nn::Network& net = model.network;

  nn::AdamState adam = nn::make_adam_state(net, {config.learningRate});
  std::mt19937_64 shuffleRng(config.seed ^ 0x9E3779B97F4A7C15ULL);
  const std::size_t batchSize = std::min(config.batchSize, trainIdx.size());
  const std::size_t width = set.shape.width();

  TrainResult result;
  TrainingHistory& history = result.history;
  std::vector<Tensor> bestState = net.state();
  double best = std::numeric_limits<double>::infinity();
  std::size_t sinceBest = 0;
  std::vector<std::size_t> order = trainIdx;

  for (std::size_t epoch = 1; epoch <= config.maxEpochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffleRng);
    double sqSum = 0.0;
    std::size_t batchIndex = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += batchSize, ++batchIndex) {
      const std::size_t end = std::min(order.size(), begin + batchSize);
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      const Tensor x = set.windows.gather_rows(idx);

      nn::Pass pass = net.make_pass(nn::Mode::Training);
      const Tensor y = net.forward(x, pass);
      const double loss = nn::mse_loss(y, x);
      const double objective = loss + nn::l2_penalty(net, config.l2Lambda);
      if (!std::isfinite(objective)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batchIndex));
      }
      nn::Gradients grads = net.zero_gradients();
      net.backward(nn::mse_loss_grad(y, x), pass, grads);
      nn::add_l2_gradient(net, config.l2Lambda, grads);
      try {
        nn::adam_step(net, grads, adam);
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(batchIndex));
      }
      net.commit(pass);
      sqSum += loss * static_cast<double>(x.rows());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.trainLoss = sqSum / static_cast<double>(order.size() * width);
    rec.validationLoss = evaluate_mse(net, validation);
    if (!std::isfinite(rec.validationLoss)) {
      throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    history.epochs.push_back(rec);
    if (rec.validationLoss < best) {
      best = rec.validationLoss;
      bestState = net.state();
      history.bestEpoch = epoch;
      history.bestValidationLoss = best;
      sinceBest = 0;
    } else if (config.patience > 0 && ++sinceBest >= config.patience) {
      break;
    }
  }
  net.load_state(bestState);

  const Tensor test = set.subset(data::Split::Test);
  result.testMse = test.rows() > 0 ? evaluate_mse(net, test) : 0.0;

  TrainingMetadata& meta = model.training;
  meta.seed = config.seed;
  meta.epochsRun = history.epochs.size();
  meta.bestEpoch = history.bestEpoch;
  const EpochRecord& chosen = history.epochs.at(history.bestEpoch - 1);
  meta.finalTrainLoss = chosen.trainLoss;
  meta.finalValidationLoss = chosen.validationLoss;
  meta.testMse = result.testMse;
  meta.config = config;
  meta.config.steps = set.shape.steps;

  const ScoreSeries valScores = score_windows(model, set, data::Split::Validation);
  for (std::size_t j = 0; j < valScores.featureNames.size(); ++j) {
    const auto ms = sample_mean_sigma(valScores.feature_scores(j));
    meta.baselineCenter.push_back(ms[0]);
    meta.baselineSigma.push_back(ms[1]);
  }

  result.model = std::move(model);
  return result;
}

PreparedData prepare_training_data(const data::MetricFrame& raw, std::size_t steps,
                                   std::size_t stride, data::SplitFractions fractions) {
  PreparedData out;
  out.norm = data::fit_global_norm(raw);
  const data::MetricFrame normalized = data::apply_global_norm(raw, out.norm);
  out.windows = data::split_windows(data::make_windows(normalized, steps, stride), fractions);
  return out;
}

Tensor reconstruct(const Model& model, const Tensor& windows) {
  if (windows.rank() != 2 || windows.row_width() != model.shape().width()) {
    throw DataError("windows do not match the model shape (" + std::to_string(model.steps) +
                    " steps x " + std::to_string(model.features().size()) + " features)");
  }
  Tensor out(windows.shape());
  const std::size_t n = windows.rows();
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < n; begin += kEvalChunk) {
    const std::size_t end = std::min(n, begin + kEvalChunk);
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    const Tensor y = model.network.infer(windows.gather_rows(idx));
    std::copy(y.values().begin(), y.values().end(),
              out.values().begin() + static_cast<std::ptrdiff_t>(begin * windows.row_width()));
  }
  return out;
}

std::vector<double> ScoreSeries::feature_scores(std::size_t j) const {
  std::vector<double> out(windows());
  for (std::size_t i = 0; i < windows(); ++i) out[i] = at(i, j);
  return out;
}

namespace {

ScoreSeries score_rows(const Model& model, const data::WindowSet& set,
                       const std::vector<std::size_t>& rows) {
  data::require_same_features(model.features(), set.featureNames, "scoring");
  if (set.shape != model.shape()) {
    throw DataError("window length " + std::to_string(set.shape.steps) +
                    " does not match the model's " + std::to_string(model.steps));
  }
  const Tensor x = set.windows.gather_rows(rows);
  const Tensor y = reconstruct(model, x);
  const std::size_t steps = set.shape.steps;
  const std::size_t feats = set.shape.features;

  ScoreSeries s;
  s.featureNames = set.featureNames;
  s.steps = steps;
  s.stride = set.stride;
  s.scores = Tensor({rows.size(), feats});
  for (std::size_t k = 0; k < rows.size(); ++k) {
    s.windowStarts.push_back(set.startTimestamps[rows[k]]);
    const auto yr = y.row(k);
    const auto xr = x.row(k);
    for (std::size_t j = 0; j < feats; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < steps; ++t) {
        const double d = yr[t * feats + j] - xr[t * feats + j];
        acc += d * d;
      }
      s.scores[k * feats + j] = acc / static_cast<double>(steps);
    }
  }
  return s;
}

}  // namespace

ScoreSeries score_windows(const Model& model, const data::WindowSet& set) {
  std::vector<std::size_t> rows(set.size());
  std::iota(rows.begin(), rows.end(), 0);
  return score_rows(model, set, rows);
}

ScoreSeries score_windows(const Model& model, const data::WindowSet& set, data::Split only) {
  return score_rows(model, set, set.indices(only));
}

ScoreSeries score_frame(const Model& model, const data::MetricFrame& raw, std::size_t stride) {
  data::require_same_features(model.features(), raw.names, "scoring");
  const data::MetricFrame normalized = data::apply_global_norm(raw, model.norm);
  return score_windows(model, data::make_windows(normalized, model.steps, stride));
}

void write_scores_csv(const ScoreSeries& scores, std::ostream& out) {
  out << "window_start";
  for (const auto& n : scores.featureNames) out << ',' << n;
  out << '\n';
  for (std::size_t i = 0; i < scores.windows(); ++i) {
    out << data::format_timestamp(scores.windowStarts[i]);
    for (std::size_t j = 0; j < scores.featureNames.size(); ++j) out << ',' << fmt(scores.at(i, j));
    out << '\n';
  }
}

nlohmann::json scores_to_json(const ScoreSeries& scores) {
  nlohmann::json j;
  j["steps"] = scores.steps;
  j["stride"] = scores.stride;
  j["features"] = scores.featureNames;
  std::vector<std::string> starts;
  for (auto ts : scores.windowStarts) starts.push_back(data::format_timestamp(ts));
  j["window_starts"] = starts;
  nlohmann::json cols = nlohmann::json::array();
  for (std::size_t f = 0; f < scores.featureNames.size(); ++f) cols.push_back(scores.feature_scores(f));
  j["scores"] = cols;
  return j;
}

ScoreSeries scores_from_json(const nlohmann::json& j) {
  try {
    ScoreSeries s;
    s.steps = j.at("steps").get<std::size_t>();
    s.stride = j.at("stride").get<std::size_t>();
    s.featureNames = j.at("features").get<std::vector<std::string>>();
    for (const auto& ts : j.at("window_starts")) {
      const auto parsed = data::parse_timestamp(ts.get<std::string>());
      if (!parsed) throw DataError("bad window start '" + ts.get<std::string>() + "'");
      s.windowStarts.push_back(*parsed);
    }
    const auto& cols = j.at("scores");
    const std::size_t f = s.featureNames.size();
    if (cols.size() != f) throw DataError("score columns do not match the feature list");
    s.scores = Tensor({s.windowStarts.size(), f});
    for (std::size_t c = 0; c < f; ++c) {
      const auto col = cols[c].get<std::vector<double>>();
      if (col.size() != s.windowStarts.size()) throw DataError("score column length mismatch");
      for (std::size_t i = 0; i < col.size(); ++i) s.scores[i * f + c] = col[i];
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed score series: ") + e.what());
  }
}

void write_history_csv(const TrainingHistory& history, std::ostream& out) {
  out << "epoch,train_mse,validation_mse,best\n";
  for (const auto& r : history.epochs) {
    out << r.epoch << ',' << fmt(r.trainLoss) << ',' << fmt(r.validationLoss) << ','
        << (r.epoch == history.bestEpoch ? 1 : 0) << '\n';
  }
}

std::vector<AblationRow> run_ablation(const data::WindowSet& set, const data::GlobalNorm& norm,
                                      std::span<const std::string> architectures,
                                      const TrainConfig& config) {
  if (architectures.empty()) throw ConfigError("ablation needs at least one architecture");
  std::vector<AblationRow> rows;
  for (const auto& text : architectures) {
    try {
      const TrainResult r = train(set, norm, parse_architecture(text), config);
      AblationRow row;
      row.architecture = text;
      row.testMse = r.testMse;
      row.bestEpoch = r.history.bestEpoch;
      for (const auto* p : r.model.network.parameters()) row.parameterCount += p->value.size();
      rows.push_back(row);
    } catch (const Error& e) {
      throw Error(e.category(), "architecture '" + text + "': " + e.what());
    }
  }
  return rows;
}

std::string format_ablation_table(std::span<const AblationRow> rows) {
  std::size_t width = std::string("Model (Neurons)").size();
  for (const auto& r : rows) width = std::max(width, r.architecture.size());
  std::ostringstream out;
  auto line = [&] { out << '+' << std::string(width + 2, '-') << "+------------+\n"; };
  char buf[32];
  line();
  out << "| " << std::string("Model (Neurons)").append(width - 15, ' ') << " | Test (MSE) |\n";
  line();
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%10.4f", r.testMse);
    out << "| " << r.architecture << std::string(width - r.architecture.size(), ' ') << " | " << buf
        << " |\n";
  }
  line();
  return out.str();
}

}  // namespace dbdiag::detector
