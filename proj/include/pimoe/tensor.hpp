#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace pimoe {

/// Dense row-major tensor of doubles. Almost all uses are rank 2, with the
/// batch on the row axis.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }
  static Tensor row(std::span<const double> values);
  static Tensor column(std::span<const double> values);
  static Tensor scalar(double value) { return Tensor({1, 1}, value); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  void fill(double value);

  bool operator==(const Tensor&) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

}  // namespace pimoe
