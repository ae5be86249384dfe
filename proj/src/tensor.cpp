#include "pimoe/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "pimoe/error.hpp"

namespace pimoe {

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(element_count(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  require(values_.size() == element_count(shape_), ErrorCode::ShapeError,
          "value count " + std::to_string(values_.size()) + " does not match shape " +
              shape_string(shape_));
}

Tensor Tensor::row(std::span<const double> values) {
  return Tensor({1, values.size()}, std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::column(std::span<const double> values) {
  return Tensor({values.size(), 1}, std::vector<double>(values.begin(), values.end()));
}

std::size_t Tensor::rows() const {
  require(shape_.size() == 2, ErrorCode::ShapeError, "rows() on non-matrix " + shape_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  require(shape_.size() == 2, ErrorCode::ShapeError, "cols() on non-matrix " + shape_string(shape_));
  return shape_[1];
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

}  // namespace pimoe
