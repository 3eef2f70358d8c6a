// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecbm/array.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "ecbm/error.hpp"

namespace ecbm::diff {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

DenseArray::DenseArray(Shape shape, double fill)
    : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

DenseArray::DenseArray(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_size(shape_) != values_.size()) {
    throw ShapeError("DenseArray: shape " + shape_string(shape_) + " holds " +
                     std::to_string(shape_size(shape_)) + " values, got " +
                     std::to_string(values_.size()));
  }
}

DenseArray DenseArray::scalar(double value) { return DenseArray({1}, {value}); }

DenseArray DenseArray::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return DenseArray({1, n}, std::move(values));
}

DenseArray DenseArray::matrix(std::size_t rows, std::size_t cols,
                              std::vector<double> values) {
  return DenseArray({rows, cols}, std::move(values));
}

std::size_t DenseArray::rows() const {
  if (shape_.size() < 2) return 1;
  return shape_size(Shape(shape_.begin(), shape_.end() - 1));
}

std::size_t DenseArray::cols() const {
  if (shape_.empty()) return 1;
  if (shape_.size() == 1) return shape_[0];
  return shape_.back();
}

DenseArray DenseArray::reshaped(Shape shape) const {
  return DenseArray(std::move(shape), values_);
}

bool DenseArray::all_finite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

}  // namespace ecbm::diff
