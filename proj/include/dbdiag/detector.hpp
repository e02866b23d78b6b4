#pragma once

// Autoencoder training, per-window anomaly scoring, model persistence and the
// architecture ablation harness.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dbdiag/architecture.hpp"
#include "dbdiag/data.hpp"
#include "dbdiag/nn.hpp"

namespace dbdiag::detector {

struct TrainConfig {
  double learningRate = 1e-3;
  double l2Lambda = 1e-3;
  std::size_t batchSize = 1500;  // clamped to the train split size
  std::size_t maxEpochs = 200;
  std::size_t patience = 20;     // epochs without a new best validation loss; 0 disables
  std::uint64_t seed = 0;
  std::size_t steps = 30;        // window length T
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double trainLoss = 0;       // per-element MSE over the epoch's batches
  double validationLoss = 0;  // per-element MSE of the validation split
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  std::size_t bestEpoch = 0;
  double bestValidationLoss = 0;
};

struct TrainingMetadata {
  std::uint64_t seed = 0;
  std::size_t epochsRun = 0;
  std::size_t bestEpoch = 0;
  double finalTrainLoss = 0;
  double finalValidationLoss = 0;
  double testMse = 0;
  TrainConfig config;
  // Per-feature mean and sample std of validation-split anomaly scores, used
  // for baseline control limits on short evaluation series.
  std::vector<double> baselineCenter;
  std::vector<double> baselineSigma;
};

struct Model {
  ArchitectureSpec architecture;
  nn::Network network;
  data::GlobalNorm norm;
  std::size_t steps = 0;
  TrainingMetadata training;

  const std::vector<std::string>& features() const noexcept { return norm.names; }
  nn::WindowShape shape() const noexcept { return {steps, norm.names.size()}; }
};

struct TrainResult {
  Model model;
  TrainingHistory history;
  double testMse = 0;  // per-element MSE of the test split, selected snapshot
};

/// Mini-batch ADAM on the reconstruction loss plus L2 on dense weights. The
/// returned model holds the parameters of the epoch with the lowest
/// validation loss. `set` must already be globally normalized with `norm`
/// and split.
TrainResult train(const data::WindowSet& set, const data::GlobalNorm& norm,
                  const ArchitectureSpec& arch, const TrainConfig& config);

/// Whole pipeline from a raw stat frame: fit the global normalization, build
/// windows, split 60/20/20, train.
struct PreparedData {
  data::GlobalNorm norm;
  data::WindowSet windows;
};
PreparedData prepare_training_data(const data::MetricFrame& raw, std::size_t steps,
                                   std::size_t stride, data::SplitFractions fractions = {});

/// Model output for normalized windows [count, steps * features].
Tensor reconstruct(const Model& model, const Tensor& windows);

/// Per-window, per-feature mean squared reconstruction error,
///   score[i][j] = (1/T) * sum_t (yhat[i,j,t] - y[i,j,t])^2,
/// in globally-normalized units.
struct ScoreSeries {
  std::vector<std::string> featureNames;
  std::vector<data::Timestamp> windowStarts;
  std::size_t steps = 0;
  std::size_t stride = 1;
  Tensor scores;  // [windows, features]

  std::size_t windows() const noexcept { return windowStarts.size(); }
  double at(std::size_t i, std::size_t j) const { return scores[i * featureNames.size() + j]; }
  std::vector<double> feature_scores(std::size_t j) const;

  friend bool operator==(const ScoreSeries&, const ScoreSeries&) = default;
};

/// Scores windows that are already normalized with the model's moments.
ScoreSeries score_windows(const Model& model, const data::WindowSet& set);
ScoreSeries score_windows(const Model& model, const data::WindowSet& set, data::Split only);
/// Checks feature names, applies the model's normalization, windows, scores.
ScoreSeries score_frame(const Model& model, const data::MetricFrame& raw, std::size_t stride = 1);

void write_scores_csv(const ScoreSeries& scores, std::ostream& out);
nlohmann::json scores_to_json(const ScoreSeries& scores);
ScoreSeries scores_from_json(const nlohmann::json& j);

void write_history_csv(const TrainingHistory& history, std::ostream& out);

// --- persistence ----------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;

nlohmann::json model_to_json(const Model& model);
Model model_from_json(const nlohmann::json& doc);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);
/// Hex FNV-1a digest stored in the model file; doubles as the model id.
std::string model_checksum(const nlohmann::json& docWithoutChecksum);

// --- ablation -------------------------------------------------------------

struct AblationRow {
  std::string architecture;  // as given by the caller
  double testMse = 0;
  std::size_t bestEpoch = 0;
  std::size_t parameterCount = 0;
};

/// Trains every architecture with the same data, seed and config.
std::vector<AblationRow> run_ablation(const data::WindowSet& set, const data::GlobalNorm& norm,
                                      std::span<const std::string> architectures,
                                      const TrainConfig& config);
std::string format_ablation_table(std::span<const AblationRow> rows);

}  // namespace dbdiag::detector
