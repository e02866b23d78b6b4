#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dbdiag {

/// Dense row-major array of doubles with a runtime shape.
///
/// The first dimension is treated as the batch (row) axis by the network;
/// row(i) returns the contiguous slice for sample i.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  std::size_t rows() const noexcept { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t row_width() const noexcept { return rows() == 0 ? 0 : values_.size() / rows(); }
  std::span<double> row(std::size_t r) noexcept;
  std::span<const double> row(std::size_t r) const noexcept;

  void fill(double v);
  bool all_finite() const noexcept;

  /// Same values, new shape; the element count must match.
  Tensor reshaped(std::vector<std::size_t> shape) const;

  /// Copies the listed rows (along axis 0) into a new tensor.
  Tensor gather_rows(std::span<const std::size_t> indices) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);

}  // namespace dbdiag
