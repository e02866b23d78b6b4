#include "dbdiag/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "dbdiag/error.hpp"

namespace dbdiag {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(shape_product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_product(shape_) != values_.size()) {
    throw ConfigError("tensor shape holds " + std::to_string(shape_product(shape_)) +
                      " elements but " + std::to_string(values_.size()) + " values were given");
  }
}

std::span<double> Tensor::row(std::size_t r) noexcept {
  const std::size_t w = row_width();
  return {values_.data() + r * w, w};
}

std::span<const double> Tensor::row(std::size_t r) const noexcept {
  const std::size_t w = row_width();
  return {values_.data() + r * w, w};
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  return Tensor(std::move(shape), values_);
}

Tensor Tensor::gather_rows(std::span<const std::size_t> indices) const {
  std::vector<std::size_t> shape = shape_;
  shape.at(0) = indices.size();
  Tensor out(std::move(shape));
  const std::size_t w = row_width();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = row(indices[i]);
    std::copy(src.begin(), src.end(), out.values_.begin() + static_cast<std::ptrdiff_t>(i * w));
  }
  return out;
}

}  // namespace dbdiag
