#include <cmath>
#include <string>

#include "dbdiag/error.hpp"
#include "dbdiag/kernels.hpp"
#include "dbdiag/nn.hpp"

namespace dbdiag::nn {

AdamState make_adam_state(std::span<const Tensor* const> params, AdamConfig config) {
  AdamState s;
  s.config = config;
  for (const Tensor* p : params) {
    s.firstMoment.emplace_back(p->shape());
    s.secondMoment.emplace_back(p->shape());
  }
  return s;
}

AdamState make_adam_state(const Network& net, AdamConfig config) {
  std::vector<const Tensor*> values;
  for (const Parameter* p : net.parameters()) values.push_back(&p->value);
  return make_adam_state(values, config);
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               std::span<const std::string> names) {
  if (params.size() != grads.size() || params.size() != state.firstMoment.size()) {
    throw InternalError("ADAM: parameter, gradient and moment counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape() ||
        params[i]->shape() != state.firstMoment[i].shape()) {
      throw InternalError("ADAM: shape mismatch for parameter " + std::to_string(i));
    }
    if (!grads[i].all_finite()) {
      const std::string name = i < names.size() ? names[i] : "parameter " + std::to_string(i);
      throw TrainingError("non-finite gradient in " + name);
    }
  }

  state.stepCount += 1;
  const auto& cfg = state.config;
  const double t = static_cast<double>(state.stepCount);
  kernels::AdamCoefficients c;
  c.stepSize = cfg.learningRate / (1.0 - std::pow(cfg.beta1, t));
  c.beta1 = cfg.beta1;
  c.beta2 = cfg.beta2;
  c.eps = cfg.eps;
  c.vCorrection = 1.0 / (1.0 - std::pow(cfg.beta2, t));
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < params.size(); ++i) {
    k.adam_update(params[i]->data(), grads[i].data(), state.firstMoment[i].data(),
                  state.secondMoment[i].data(), params[i]->size(), c);
  }
}

void adam_step(Network& net, const Gradients& grads, AdamState& state) {
  std::vector<Tensor*> values;
  for (Parameter* p : net.parameters()) values.push_back(&p->value);
  const auto names = net.parameter_names();
  adam_step(values, grads, state, names);
}

}  // namespace dbdiag::nn
