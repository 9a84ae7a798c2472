// SPDX-License-Identifier: Apache-2.0
#include "aipo/ndarray.hpp"

#include <cmath>
#include <limits>

#include "aipo/error.hpp"

namespace aipo {

std::string shape_string(const NumArray::Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

NumArray::NumArray(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty()) throw numeric_error("bad_shape", "empty shape");
  std::size_t n = 1;
  for (std::size_t e : shape_) {
    if (e == 0) throw numeric_error("bad_shape", "zero extent in " + aipo::shape_string(shape_));
    if (n > std::numeric_limits<std::size_t>::max() / e) {
      throw numeric_error("bad_shape", "extent overflow in " + aipo::shape_string(shape_));
    }
    n *= e;
  }
  if (n != data_.size()) {
    throw numeric_error("bad_shape", "shape " + aipo::shape_string(shape_) + " needs " +
                                         std::to_string(n) + " values, got " +
                                         std::to_string(data_.size()));
  }
}

NumArray NumArray::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

NumArray NumArray::filled(Shape shape, double value) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return NumArray(std::move(shape), std::vector<double>(n, value));
}

NumArray NumArray::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return NumArray({n}, std::move(values));
}

NumArray NumArray::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return NumArray({rows, cols}, std::move(values));
}

double NumArray::item() const {
  if (data_.size() != 1) {
    throw numeric_error("not_scalar", "item() on array of shape " + aipo::shape_string(shape_));
  }
  return data_[0];
}

bool NumArray::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string NumArray::shape_string() const { return aipo::shape_string(shape_); }

}  // namespace aipo
