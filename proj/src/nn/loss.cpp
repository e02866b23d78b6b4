#include "dbdiag/error.hpp"
#include "dbdiag/kernels.hpp"
#include "dbdiag/nn.hpp"

namespace dbdiag::nn {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ConfigError("loss: prediction and target shapes differ");
  if (a.rows() == 0) throw ConfigError("loss: empty batch");
}

}  // namespace

double mse_loss(const Tensor& pred, const Tensor& target) {
  check_same_shape(pred, target);
  const double s = kernels::active().sum_sq_diff(pred.data(), target.data(), pred.size());
  return s / static_cast<double>(pred.rows());
}

Tensor mse_loss_grad(const Tensor& pred, const Tensor& target) {
  check_same_shape(pred, target);
  Tensor g(pred.shape());
  const double scale = 2.0 / static_cast<double>(pred.rows());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = scale * (pred[i] - target[i]);
  return g;
}

double mean_squared_error(const Tensor& pred, const Tensor& target) {
  check_same_shape(pred, target);
  const double s = kernels::active().sum_sq_diff(pred.data(), target.data(), pred.size());
  return s / static_cast<double>(pred.size());
}

double l2_penalty(const Network& net, double lambda) {
  double s = 0.0;
  for (const Parameter* p : net.parameters()) {
    if (p->regularized) s += kernels::active().dot(p->value.data(), p->value.data(), p->value.size());
  }
  return lambda * s;
}

void add_l2_gradient(const Network& net, double lambda, Gradients& grads) {
  const auto params = net.parameters();
  if (params.size() != grads.size()) throw InternalError("gradient buffer does not match network");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->regularized) continue;
    kernels::active().axpy(2.0 * lambda, params[i]->value.data(), grads[i].data(), grads[i].size());
  }
}

}  // namespace dbdiag::nn
