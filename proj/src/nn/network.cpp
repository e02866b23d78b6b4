#include <string>

#include "dbdiag/error.hpp"
#include "dbdiag/nn.hpp"

namespace dbdiag::nn {

Network::Network(WindowShape shape, std::vector<std::unique_ptr<Layer>> layers)
    : shape_(shape), layers_(std::move(layers)) {
  std::size_t width = shape_.width();
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i]->input_width() != width) {
      throw ConfigError("layer " + std::to_string(i) + " (" +
                        std::string(kind_name(layers_[i]->kind())) + ") expects width " +
                        std::to_string(layers_[i]->input_width()) + " but receives " +
                        std::to_string(width));
    }
    width = layers_[i]->output_width();
  }
  if (!layers_.empty() && width != shape_.width()) {
    throw ConfigError("network output width " + std::to_string(width) +
                      " does not match the window width " + std::to_string(shape_.width()));
  }
}

Network::Network(const Network& other) : shape_(other.shape_) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    Network copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Tensor Network::forward(const Tensor& x, Pass& pass) const {
  if (pass.size() != layers_.size()) throw InternalError("pass was created for another network");
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) h = layers_[i]->forward(h, pass, i);
  return h;
}

Tensor Network::infer(const Tensor& x) const {
  Pass pass = make_pass(Mode::Inference);
  return forward(x, pass);
}

Tensor Network::backward(const Tensor& dOutput, Pass& pass, Gradients& grads) const {
  if (pass.size() != layers_.size()) throw InternalError("pass was created for another network");
  std::vector<std::size_t> offset(layers_.size() + 1, 0);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    offset[i + 1] = offset[i] + layers_[i]->parameters().size();
  }
  if (grads.size() != offset.back()) throw InternalError("gradient buffer does not match network");
  Tensor d = dOutput;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    std::span<Tensor> g(grads.data() + offset[i], offset[i + 1] - offset[i]);
    d = layers_[i]->backward(d, pass, i, g);
  }
  return d;
}

void Network::commit(const Pass& pass) {
  if (pass.mode() != Mode::Training) return;
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->commit(pass.cache(i));
}

Gradients Network::zero_gradients() const {
  Gradients g;
  for (const auto& l : layers_) {
    for (const auto& p : l->parameters()) g.emplace_back(p.value.shape());
  }
  return g;
}

std::vector<Parameter*> Network::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_) {
    for (auto& p : l->parameters()) out.push_back(&p);
  }
  return out;
}

std::vector<const Parameter*> Network::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& l : layers_) {
    for (const auto& p : l->parameters()) out.push_back(&p);
  }
  return out;
}

std::vector<std::string> Network::parameter_names() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (const auto& p : layers_[i]->parameters()) {
      out.push_back("layer" + std::to_string(i) + "." +
                    std::string(kind_name(layers_[i]->kind())) + "." + p.name);
    }
  }
  return out;
}

std::vector<Tensor> Network::state() const {
  std::vector<Tensor> out;
  for (const auto& l : layers_) {
    for (const auto& p : l->parameters()) out.push_back(p.value);
    for (const auto& b : l->buffers()) out.push_back(b.value);
  }
  return out;
}

void Network::load_state(const std::vector<Tensor>& state) {
  std::size_t k = 0;
  for (auto& l : layers_) {
    for (auto* group : {&l->parameters(), &l->buffers()}) {
      for (auto& p : *group) {
        if (k >= state.size() || state[k].shape() != p.value.shape()) {
          throw InternalError("network state snapshot does not match the network layout");
        }
        p.value = state[k++];
      }
    }
  }
  if (k != state.size()) throw InternalError("network state snapshot has extra entries");
}

}  // namespace dbdiag::nn
