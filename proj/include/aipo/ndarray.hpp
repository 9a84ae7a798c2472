// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace aipo {

/// Dense row-major array of doubles with a shape of positive extents.
class NumArray {
 public:
  using Shape = std::vector<std::size_t>;

  /// A single zero, shape {1}.
  NumArray() : shape_{1}, data_(1, 0.0) {}
  NumArray(Shape shape, std::vector<double> data);

  static NumArray zeros(Shape shape);
  static NumArray filled(Shape shape, double value);
  static NumArray scalar(double value) { return NumArray({1}, {value}); }
  static NumArray vector(std::vector<double> values);
  static NumArray matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t rows() const { return shape_.at(0); }
  std::size_t cols() const { return rank() >= 2 ? shape_[1] : 1; }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> mutable_data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  /// The single element of a size-1 array.
  double item() const;

  bool all_finite() const noexcept;
  std::string shape_string() const;

  friend bool operator==(const NumArray& a, const NumArray& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

std::string shape_string(const NumArray::Shape& shape);

}  // namespace aipo
