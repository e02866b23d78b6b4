#pragma once

// Minimal feed-forward network engine: dense, ReLU, batch normalization and
// batch temporal normalization layers with exact backpropagation.
//
// Every activation tensor is 2-D, [batch, width]. Normalization layers that
// sit outside the dense stack see each row as a [steps, features] window laid
// out step-major (element t*features + j).

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dbdiag/tensor.hpp"

namespace dbdiag::nn {

enum class Mode { Training, Inference };

enum class LayerKind { Dense, DenseReverse, ReLU, BN, BNReverse, BTN, BTNReverse };

std::string_view kind_name(LayerKind kind);
std::optional<LayerKind> kind_from_name(std::string_view name);

struct WindowShape {
  std::size_t steps = 0;
  std::size_t features = 0;
  std::size_t width() const noexcept { return steps * features; }
  friend bool operator==(const WindowShape&, const WindowShape&) = default;
};

struct Parameter {
  std::string name;
  Tensor value;
  bool regularized = false;  // included in the L2 penalty
};

/// Per-layer activations recorded during one forward pass.
struct LayerCache {
  bool valid = false;
  Tensor input;
  Tensor normalized;           // BN/BTN: x-hat; BTNReverse: the affine output before rescaling
  std::vector<double> mean;    // BN: per channel; BTN: per (sample, feature)
  std::vector<double> spread;  // BN: 1/sqrt(var+eps) per channel; BTN: population std
  std::vector<double> variance;  // BN batch variance (for the running estimate)
  // BTN only: gradients w.r.t. the recorded moments, pushed by the paired
  // BTNReverse during backward.
  std::vector<double> meanGrad;
  std::vector<double> stdGrad;
};

/// State of one forward/backward pass. Owned by the caller, so a const
/// network can be evaluated from several threads at once.
class Pass {
 public:
  Pass(Mode mode, std::size_t layerCount) : mode_(mode), caches_(layerCount) {}

  Mode mode() const noexcept { return mode_; }
  LayerCache& cache(std::size_t i) { return caches_.at(i); }
  const LayerCache& cache(std::size_t i) const { return caches_.at(i); }
  std::size_t size() const noexcept { return caches_.size(); }

 private:
  Mode mode_;
  std::vector<LayerCache> caches_;
};

class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  virtual std::size_t input_width() const = 0;
  virtual std::size_t output_width() const = 0;
  virtual std::unique_ptr<Layer> clone() const = 0;

  virtual Tensor forward(const Tensor& x, Pass& pass, std::size_t index) const = 0;
  /// Returns the gradient w.r.t. the layer input; writes parameter gradients
  /// (accumulating) into grads, which is ordered like parameters().
  virtual Tensor backward(const Tensor& dy, Pass& pass, std::size_t index,
                          std::span<Tensor> grads) const = 0;

  /// Folds the statistics of a training-mode forward pass into running
  /// estimates. No-op for layers without running state.
  virtual void commit(const LayerCache&) {}

  std::vector<Parameter>& parameters() noexcept { return params_; }
  const std::vector<Parameter>& parameters() const noexcept { return params_; }
  // Non-trainable state persisted with the model (BN running statistics).
  std::vector<Parameter>& buffers() noexcept { return buffers_; }
  const std::vector<Parameter>& buffers() const noexcept { return buffers_; }

 protected:
  std::vector<Parameter> params_;
  std::vector<Parameter> buffers_;
};

class DenseLayer final : public Layer {
 public:
  /// Glorot-uniform weights drawn from rng, zero bias.
  DenseLayer(std::size_t in, std::size_t out, std::mt19937_64& rng, bool reverse = false);
  DenseLayer(Tensor weight, Tensor bias, bool reverse = false);

  LayerKind kind() const override { return reverse_ ? LayerKind::DenseReverse : LayerKind::Dense; }
  std::size_t input_width() const override { return in_; }
  std::size_t output_width() const override { return out_; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<DenseLayer>(*this); }
  Tensor forward(const Tensor& x, Pass& pass, std::size_t index) const override;
  Tensor backward(const Tensor& dy, Pass& pass, std::size_t index,
                  std::span<Tensor> grads) const override;

 private:
  std::size_t in_;
  std::size_t out_;
  bool reverse_;
};

class ReluLayer final : public Layer {
 public:
  explicit ReluLayer(std::size_t width) : width_(width) {}

  LayerKind kind() const override { return LayerKind::ReLU; }
  std::size_t input_width() const override { return width_; }
  std::size_t output_width() const override { return width_; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ReluLayer>(*this); }
  Tensor forward(const Tensor& x, Pass& pass, std::size_t index) const override;
  Tensor backward(const Tensor& dy, Pass& pass, std::size_t index,
                  std::span<Tensor> grads) const override;

 private:
  std::size_t width_;
};

/// Batch normalization. A row of `width` values is split into width/channels
/// groups of `channels`; statistics for channel c are taken over the batch
/// and every group. On the window view channels == features, so each feature
/// is normalized over batch and time; on a hidden layer channels == width.
class BatchNormLayer final : public Layer {
 public:
  static constexpr double kEpsilon = 1e-5;
  static constexpr double kMomentum = 0.1;

  BatchNormLayer(std::size_t width, std::size_t channels, bool reverse = false);

  LayerKind kind() const override { return reverse_ ? LayerKind::BNReverse : LayerKind::BN; }
  std::size_t input_width() const override { return width_; }
  std::size_t output_width() const override { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNormLayer>(*this); }
  Tensor forward(const Tensor& x, Pass& pass, std::size_t index) const override;
  Tensor backward(const Tensor& dy, Pass& pass, std::size_t index,
                  std::span<Tensor> grads) const override;
  void commit(const LayerCache& cache) override;

  std::uint64_t updates() const noexcept;

 private:
  std::size_t width_;
  std::size_t channels_;
  bool reverse_;
};

/// Batch temporal normalization: every (sample, feature) series is
/// standardized along the time axis with its own mean and population std,
///   z[t] = gamma[j] * (x[t] - mean) / (std + eps) + beta[j].
class BtnLayer final : public Layer {
 public:
  static constexpr double kEpsilon = 1e-5;

  explicit BtnLayer(WindowShape shape);

  LayerKind kind() const override { return LayerKind::BTN; }
  std::size_t input_width() const override { return shape_.width(); }
  std::size_t output_width() const override { return shape_.width(); }
  WindowShape shape() const noexcept { return shape_; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<BtnLayer>(*this); }
  Tensor forward(const Tensor& x, Pass& pass, std::size_t index) const override;
  Tensor backward(const Tensor& dy, Pass& pass, std::size_t index,
                  std::span<Tensor> grads) const override;

 private:
  WindowShape shape_;
};

/// Decoder mirror of a BtnLayer. Applies its own affine, then restores the
/// scale with the moments the paired BTN recorded in the same pass:
///   out = (gamma[j] * h + beta[j]) * (std + eps) + mean.
class BtnReverseLayer final : public Layer {
 public:
  BtnReverseLayer(WindowShape shape, std::size_t pairedIndex);

  LayerKind kind() const override { return LayerKind::BTNReverse; }
  std::size_t input_width() const override { return shape_.width(); }
  std::size_t output_width() const override { return shape_.width(); }
  std::size_t paired_index() const noexcept { return paired_; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<BtnReverseLayer>(*this); }
  Tensor forward(const Tensor& x, Pass& pass, std::size_t index) const override;
  Tensor backward(const Tensor& dy, Pass& pass, std::size_t index,
                  std::span<Tensor> grads) const override;

 private:
  WindowShape shape_;
  std::size_t paired_;
};

/// Parameter gradients for a whole network, flattened in parameters() order.
using Gradients = std::vector<Tensor>;

class Network {
 public:
  Network() = default;
  Network(WindowShape shape, std::vector<std::unique_ptr<Layer>> layers);
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  WindowShape shape() const noexcept { return shape_; }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }

  Pass make_pass(Mode mode) const { return Pass(mode, layers_.size()); }
  Tensor forward(const Tensor& x, Pass& pass) const;
  /// Inference-mode forward with a private pass.
  Tensor infer(const Tensor& x) const;
  /// Backpropagates dLoss/dOutput; returns dLoss/dInput.
  Tensor backward(const Tensor& dOutput, Pass& pass, Gradients& grads) const;
  void commit(const Pass& pass);

  Gradients zero_gradients() const;
  /// Trainable parameters in a fixed order (layer by layer).
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  /// "layer<i>.<Kind>.<name>" for each entry of parameters().
  std::vector<std::string> parameter_names() const;

  /// Every parameter and buffer value, for snapshots.
  std::vector<Tensor> state() const;
  void load_state(const std::vector<Tensor>& state);

 private:
  WindowShape shape_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

// --- loss -----------------------------------------------------------------

/// Reconstruction loss summed over every non-batch element and averaged over
/// the batch: (1/N) * sum_i sum_j sum_t (pred - target)^2.
double mse_loss(const Tensor& pred, const Tensor& target);
/// Gradient of mse_loss w.r.t. pred.
Tensor mse_loss_grad(const Tensor& pred, const Tensor& target);
/// Plain per-element mean squared error.
double mean_squared_error(const Tensor& pred, const Tensor& target);

/// lambda * sum of squared regularized weights.
double l2_penalty(const Network& net, double lambda);
void add_l2_gradient(const Network& net, double lambda, Gradients& grads);

// --- optimizer ------------------------------------------------------------

struct AdamConfig {
  double learningRate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t stepCount = 0;
  std::vector<Tensor> firstMoment;
  std::vector<Tensor> secondMoment;
};

AdamState make_adam_state(std::span<const Tensor* const> params, AdamConfig config = {});
AdamState make_adam_state(const Network& net, AdamConfig config = {});

/// One bias-corrected ADAM update. Throws TrainingError naming the offending
/// parameter if any gradient is not finite; parameters are left untouched.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               std::span<const std::string> names = {});
void adam_step(Network& net, const Gradients& grads, AdamState& state);

}  // namespace dbdiag::nn
