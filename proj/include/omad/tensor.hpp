#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "omad/error.hpp"

namespace omad {

using Shape = std::vector<std::size_t>;

// Arithmetic precision of a graph, a model or a training run. 32-bit is the
// default; 64-bit is used for gradient checking and exactness tests.
enum class Precision { kF32, kF64 };

std::string shape_string(const Shape& shape);

// Product of dims; 1 for the rank-0 (scalar) shape.
std::size_t element_count(const Shape& shape);

// Dense row-major array. Pure value type: graph bookkeeping lives in Graph.
template <typename Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;

  explicit Tensor(Shape shape, Real fill = Real{0})
      : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

  Tensor(Shape shape, std::vector<Real> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != element_count(shape_)) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
    }
  }

  static Tensor scalar(Real value) { return Tensor(Shape{}, std::vector<Real>{value}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }

  std::span<Real> data() { return data_; }
  std::span<const Real> data() const { return data_; }
  const std::vector<Real>& vector() const { return data_; }

  Real& operator[](std::size_t i) { return data_[i]; }
  const Real& operator[](std::size_t i) const { return data_[i]; }

  // Value of a single-element tensor.
  Real item() const {
    if (data_.size() != 1) {
      throw DimensionError("item() on tensor of shape " + shape_string(shape_));
    }
    return data_[0];
  }

  template <typename To>
  Tensor<To> cast() const {
    return Tensor<To>(shape_, std::vector<To>(data_.begin(), data_.end()));
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<Real> data_;
};

// True iff every element is finite.
template <typename Real>
bool all_finite(std::span<const Real> values);

extern template bool all_finite<float>(std::span<const float>);
extern template bool all_finite<double>(std::span<const double>);

}  // namespace omad
