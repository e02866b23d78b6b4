#include <algorithm>
#include <cmath>
#include <string>

#include "dbdiag/error.hpp"
#include "dbdiag/kernels.hpp"
#include "dbdiag/nn.hpp"

namespace dbdiag::nn {

namespace {

void check_width(const Tensor& x, std::size_t width, LayerKind kind) {
  if (x.rank() != 2 || x.dim(1) != width) {
    throw ConfigError(std::string(kind_name(kind)) + " layer expects rows of width " +
                      std::to_string(width) + ", got " +
                      (x.rank() == 2 ? std::to_string(x.dim(1)) : "rank " + std::to_string(x.rank())));
  }
}

LayerCache& require_forward(Pass& pass, std::size_t index, LayerKind kind) {
  LayerCache& c = pass.cache(index);
  if (!c.valid) {
    throw InternalError(std::string("backward through ") + std::string(kind_name(kind)) +
                        " layer " + std::to_string(index) + " without a recorded forward pass");
  }
  return c;
}

}  // namespace

std::string_view kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Dense: return "Dense";
    case LayerKind::DenseReverse: return "DenseReverse";
    case LayerKind::ReLU: return "ReLU";
    case LayerKind::BN: return "BN";
    case LayerKind::BNReverse: return "BNReverse";
    case LayerKind::BTN: return "BTN";
    case LayerKind::BTNReverse: return "BTNReverse";
  }
  return "?";
}

std::optional<LayerKind> kind_from_name(std::string_view name) {
  for (LayerKind k : {LayerKind::Dense, LayerKind::DenseReverse, LayerKind::ReLU, LayerKind::BN,
                      LayerKind::BNReverse, LayerKind::BTN, LayerKind::BTNReverse}) {
    if (kind_name(k) == name) return k;
  }
  return std::nullopt;
}

// --- Dense -----------------------------------------------------------------

DenseLayer::DenseLayer(std::size_t in, std::size_t out, std::mt19937_64& rng, bool reverse)
    : in_(in), out_(out), reverse_(reverse) {
  Tensor w({in, out});
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& v : w.values()) v = dist(rng);
  params_.push_back({"weight", std::move(w), true});
  params_.push_back({"bias", Tensor({out}), false});
}

DenseLayer::DenseLayer(Tensor weight, Tensor bias, bool reverse) : reverse_(reverse) {
  if (weight.rank() != 2 || bias.rank() != 1 || bias.dim(0) != weight.dim(1)) {
    throw ConfigError("dense weight must be [in, out] with a bias of length out");
  }
  in_ = weight.dim(0);
  out_ = weight.dim(1);
  params_.push_back({"weight", std::move(weight), true});
  params_.push_back({"bias", std::move(bias), false});
}

Tensor DenseLayer::forward(const Tensor& x, Pass& pass, std::size_t index) const {
  check_width(x, in_, kind());
  const auto& k = kernels::active();
  const Tensor& w = params_[0].value;
  const Tensor& b = params_[1].value;
  const std::size_t batch = x.rows();
  Tensor y({batch, out_});
  for (std::size_t r = 0; r < batch; ++r) {
    auto yr = y.row(r);
    std::copy(b.values().begin(), b.values().end(), yr.begin());
    const auto xr = x.row(r);
    for (std::size_t i = 0; i < in_; ++i) {
      if (xr[i] != 0.0) k.axpy(xr[i], w.data() + i * out_, yr.data(), out_);
    }
  }
  LayerCache& c = pass.cache(index);
  c.input = x;
  c.valid = true;
  return y;
}

Tensor DenseLayer::backward(const Tensor& dy, Pass& pass, std::size_t index,
                            std::span<Tensor> grads) const {
  const LayerCache& c = require_forward(pass, index, kind());
  check_width(dy, out_, kind());
  const auto& k = kernels::active();
  const Tensor& w = params_[0].value;
  Tensor& gw = grads[0];
  Tensor& gb = grads[1];
  const std::size_t batch = dy.rows();
  Tensor dx({batch, in_});
  for (std::size_t r = 0; r < batch; ++r) {
    const auto dyr = dy.row(r);
    const auto xr = c.input.row(r);
    auto dxr = dx.row(r);
    for (std::size_t i = 0; i < in_; ++i) {
      dxr[i] = k.dot(dyr.data(), w.data() + i * out_, out_);
      if (xr[i] != 0.0) k.axpy(xr[i], dyr.data(), gw.data() + i * out_, out_);
    }
    k.axpy(1.0, dyr.data(), gb.data(), out_);
  }
  return dx;
}

// --- ReLU ------------------------------------------------------------------

Tensor ReluLayer::forward(const Tensor& x, Pass& pass, std::size_t index) const {
  check_width(x, width_, kind());
  Tensor y = x;
  for (double& v : y.values()) v = std::max(v, 0.0);
  LayerCache& c = pass.cache(index);
  c.input = x;
  c.valid = true;
  return y;
}

Tensor ReluLayer::backward(const Tensor& dy, Pass& pass, std::size_t index,
                           std::span<Tensor>) const {
  const LayerCache& c = require_forward(pass, index, kind());
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(c.input[i] > 0.0)) dx[i] = 0.0;
  }
  return dx;
}

// --- BN --------------------------------------------------------------------

BatchNormLayer::BatchNormLayer(std::size_t width, std::size_t channels, bool reverse)
    : width_(width), channels_(channels), reverse_(reverse) {
  if (channels == 0 || width % channels != 0) {
    throw ConfigError("batch normalization width " + std::to_string(width) +
                      " is not a multiple of its channel count " + std::to_string(channels));
  }
  params_.push_back({"gamma", Tensor({channels}, 1.0), false});
  params_.push_back({"beta", Tensor({channels}, 0.0), false});
  buffers_.push_back({"running_mean", Tensor({channels}, 0.0), false});
  buffers_.push_back({"running_var", Tensor({channels}, 1.0), false});
  buffers_.push_back({"updates", Tensor({1}, 0.0), false});
}

std::uint64_t BatchNormLayer::updates() const noexcept {
  return static_cast<std::uint64_t>(buffers_[2].value[0]);
}

Tensor BatchNormLayer::forward(const Tensor& x, Pass& pass, std::size_t index) const {
  check_width(x, width_, kind());
  const std::size_t batch = x.rows();
  const std::size_t groups = width_ / channels_;
  const Tensor& gamma = params_[0].value;
  const Tensor& beta = params_[1].value;
  LayerCache& c = pass.cache(index);
  c.mean.assign(channels_, 0.0);
  c.spread.assign(channels_, 0.0);
  c.variance.assign(channels_, 0.0);

  if (pass.mode() == Mode::Training) {
    const double count = static_cast<double>(batch * groups);
    for (std::size_t i = 0; i < x.size(); ++i) c.mean[i % channels_] += x[i];
    for (double& m : c.mean) m /= count;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - c.mean[i % channels_];
      c.variance[i % channels_] += d * d;
    }
    for (std::size_t ch = 0; ch < channels_; ++ch) {
      c.variance[ch] /= count;
      c.spread[ch] = 1.0 / std::sqrt(c.variance[ch] + kEpsilon);
    }
  } else {
    if (updates() == 0) {
      throw ConfigError(std::string(kind_name(kind())) +
                        " layer used for inference before any training update");
    }
    const Tensor& rm = buffers_[0].value;
    const Tensor& rv = buffers_[1].value;
    for (std::size_t ch = 0; ch < channels_; ++ch) {
      c.mean[ch] = rm[ch];
      c.variance[ch] = rv[ch];
      c.spread[ch] = 1.0 / std::sqrt(rv[ch] + kEpsilon);
    }
  }

  c.normalized = Tensor({batch, width_});
  Tensor y({batch, width_});
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t ch = i % channels_;
    const double xh = (x[i] - c.mean[ch]) * c.spread[ch];
    c.normalized[i] = xh;
    y[i] = gamma[ch] * xh + beta[ch];
  }
  c.valid = true;
  return y;
}

Tensor BatchNormLayer::backward(const Tensor& dy, Pass& pass, std::size_t index,
                                std::span<Tensor> grads) const {
  const LayerCache& c = require_forward(pass, index, kind());
  check_width(dy, width_, kind());
  const Tensor& gamma = params_[0].value;
  Tensor& dgamma = grads[0];
  Tensor& dbeta = grads[1];
  const std::size_t batch = dy.rows();
  const double count = static_cast<double>(batch * (width_ / channels_));

  std::vector<double> sumD(channels_, 0.0);
  std::vector<double> sumDX(channels_, 0.0);
  for (std::size_t i = 0; i < dy.size(); ++i) {
    const std::size_t ch = i % channels_;
    dgamma[ch] += dy[i] * c.normalized[i];
    dbeta[ch] += dy[i];
    const double dxh = dy[i] * gamma[ch];
    sumD[ch] += dxh;
    sumDX[ch] += dxh * c.normalized[i];
  }

  Tensor dx({batch, width_});
  for (std::size_t i = 0; i < dy.size(); ++i) {
    const std::size_t ch = i % channels_;
    const double dxh = dy[i] * gamma[ch];
    if (pass.mode() == Mode::Training) {
      dx[i] = c.spread[ch] * (dxh - sumD[ch] / count - c.normalized[i] * sumDX[ch] / count);
    } else {
      dx[i] = c.spread[ch] * dxh;
    }
  }
  return dx;
}

void BatchNormLayer::commit(const LayerCache& cache) {
  if (!cache.valid || cache.variance.size() != channels_) return;
  Tensor& rm = buffers_[0].value;
  Tensor& rv = buffers_[1].value;
  double& n = buffers_[2].value[0];
  // Cumulative average for the first updates, exponential afterwards.
  const double momentum = std::max(kMomentum, 1.0 / (n + 1.0));
  for (std::size_t ch = 0; ch < channels_; ++ch) {
    rm[ch] = (1.0 - momentum) * rm[ch] + momentum * cache.mean[ch];
    rv[ch] = (1.0 - momentum) * rv[ch] + momentum * cache.variance[ch];
  }
  n += 1.0;
}

// --- BTN -------------------------------------------------------------------

BtnLayer::BtnLayer(WindowShape shape) : shape_(shape) {
  if (shape.steps < 2) throw ConfigError("BTN needs at least 2 time steps per window");
  params_.push_back({"gamma", Tensor({shape.features}, 1.0), false});
  params_.push_back({"beta", Tensor({shape.features}, 0.0), false});
}

Tensor BtnLayer::forward(const Tensor& x, Pass& pass, std::size_t index) const {
  check_width(x, shape_.width(), kind());
  const std::size_t batch = x.rows();
  const std::size_t steps = shape_.steps;
  const std::size_t feats = shape_.features;
  const Tensor& gamma = params_[0].value;
  const Tensor& beta = params_[1].value;
  LayerCache& c = pass.cache(index);
  c.input = x;
  c.mean.assign(batch * feats, 0.0);
  c.spread.assign(batch * feats, 0.0);
  c.meanGrad.assign(batch * feats, 0.0);
  c.stdGrad.assign(batch * feats, 0.0);
  c.normalized = Tensor({batch, shape_.width()});
  Tensor y({batch, shape_.width()});

  for (std::size_t b = 0; b < batch; ++b) {
    const auto xr = x.row(b);
    for (std::size_t j = 0; j < feats; ++j) {
      double m = 0.0;
      for (std::size_t t = 0; t < steps; ++t) m += xr[t * feats + j];
      m /= static_cast<double>(steps);
      double ss = 0.0;
      for (std::size_t t = 0; t < steps; ++t) {
        const double d = xr[t * feats + j] - m;
        ss += d * d;
      }
      const double s = std::sqrt(ss / static_cast<double>(steps));
      c.mean[b * feats + j] = m;
      c.spread[b * feats + j] = s;
      const double inv = 1.0 / (s + kEpsilon);
      for (std::size_t t = 0; t < steps; ++t) {
        const std::size_t e = b * shape_.width() + t * feats + j;
        const double xh = (x[e] - m) * inv;
        c.normalized[e] = xh;
        y[e] = gamma[j] * xh + beta[j];
      }
    }
  }
  c.valid = true;
  return y;
}

Tensor BtnLayer::backward(const Tensor& dy, Pass& pass, std::size_t index,
                          std::span<Tensor> grads) const {
  const LayerCache& c = require_forward(pass, index, kind());
  check_width(dy, shape_.width(), kind());
  const std::size_t batch = dy.rows();
  const std::size_t steps = shape_.steps;
  const std::size_t feats = shape_.features;
  const double n = static_cast<double>(steps);
  const Tensor& gamma = params_[0].value;
  Tensor& dgamma = grads[0];
  Tensor& dbeta = grads[1];
  Tensor dx({batch, shape_.width()});

  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < feats; ++j) {
      const std::size_t bj = b * feats + j;
      const double s = c.spread[bj];
      const double inv = 1.0 / (s + kEpsilon);
      double sumD = 0.0;
      double sumDX = 0.0;
      for (std::size_t t = 0; t < steps; ++t) {
        const std::size_t e = b * shape_.width() + t * feats + j;
        dgamma[j] += dy[e] * c.normalized[e];
        dbeta[j] += dy[e];
        const double dxh = dy[e] * gamma[j];
        sumD += dxh;
        sumDX += dxh * c.normalized[e];
      }
      // d(xhat_t)/d(mean) = -1/(s+eps); d(xhat_t)/d(std) = -xhat_t/(s+eps).
      const double dMean = -sumD * inv + c.meanGrad[bj];
      const double dStd = -sumDX * inv + c.stdGrad[bj];
      for (std::size_t t = 0; t < steps; ++t) {
        const std::size_t e = b * shape_.width() + t * feats + j;
        double g = dy[e] * gamma[j] * inv + dMean / n;
        // d(std)/d(x_t) = (x_t - mean) / (T * std); all deviations vanish when std == 0.
        if (s > 0.0) g += dStd * (c.input[e] - c.mean[bj]) / (n * s);
        dx[e] = g;
      }
    }
  }
  return dx;
}

// --- BTN reverse -----------------------------------------------------------

BtnReverseLayer::BtnReverseLayer(WindowShape shape, std::size_t pairedIndex)
    : shape_(shape), paired_(pairedIndex) {
  params_.push_back({"gamma", Tensor({shape.features}, 1.0), false});
  params_.push_back({"beta", Tensor({shape.features}, 0.0), false});
}

Tensor BtnReverseLayer::forward(const Tensor& x, Pass& pass, std::size_t index) const {
  check_width(x, shape_.width(), kind());
  const std::size_t batch = x.rows();
  const std::size_t steps = shape_.steps;
  const std::size_t feats = shape_.features;
  if (paired_ >= index || paired_ >= pass.size() || !pass.cache(paired_).valid ||
      pass.cache(paired_).mean.size() != batch * feats) {
    throw InternalError("BTNReverse layer " + std::to_string(index) +
                        " has no moments from its paired BTN layer " + std::to_string(paired_));
  }
  const LayerCache& pc = pass.cache(paired_);
  const Tensor& gamma = params_[0].value;
  const Tensor& beta = params_[1].value;
  LayerCache& c = pass.cache(index);
  c.input = x;
  c.normalized = Tensor({batch, shape_.width()});
  Tensor y({batch, shape_.width()});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t j = 0; j < feats; ++j) {
        const std::size_t e = b * shape_.width() + t * feats + j;
        const std::size_t bj = b * feats + j;
        const double a = gamma[j] * x[e] + beta[j];
        c.normalized[e] = a;
        y[e] = a * (pc.spread[bj] + BtnLayer::kEpsilon) + pc.mean[bj];
      }
    }
  }
  c.valid = true;
  return y;
}

Tensor BtnReverseLayer::backward(const Tensor& dy, Pass& pass, std::size_t index,
                                 std::span<Tensor> grads) const {
  const LayerCache& c = require_forward(pass, index, kind());
  check_width(dy, shape_.width(), kind());
  LayerCache& pc = require_forward(pass, paired_, LayerKind::BTN);
  const std::size_t batch = dy.rows();
  const std::size_t feats = shape_.features;
  const Tensor& gamma = params_[0].value;
  Tensor& dgamma = grads[0];
  Tensor& dbeta = grads[1];
  Tensor dx({batch, shape_.width()});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < shape_.steps; ++t) {
      for (std::size_t j = 0; j < feats; ++j) {
        const std::size_t e = b * shape_.width() + t * feats + j;
        const std::size_t bj = b * feats + j;
        const double da = dy[e] * (pc.spread[bj] + BtnLayer::kEpsilon);
        dgamma[j] += da * c.input[e];
        dbeta[j] += da;
        dx[e] = da * gamma[j];
        pc.meanGrad[bj] += dy[e];
        pc.stdGrad[bj] += dy[e] * c.normalized[e];
      }
    }
  }
  return dx;
}

}  // namespace dbdiag::nn
