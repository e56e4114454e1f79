#include "cot2/tensor/tensor.hpp"

#include <functional>
#include <numeric>
#include <sstream>

#include "cot2/common/error.hpp"

namespace cot2::tensor {
namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(element_count(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != element_count(shape_)) {
    throw DimensionError("tensor: " + std::to_string(values_.size()) +
                         " values do not fill shape " + shape_string());
  }
}

Tensor Tensor::scalar(double value) { return Tensor({}, std::vector{value}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) {
  return Tensor({rows, cols}, 0.0);
}

Tensor Tensor::zeros_like(const Tensor& other) {
  return Tensor(other.shape_, 0.0);
}

std::size_t Tensor::rows() const {
  if (shape_.size() < 2) {
    return 1;
  }
  if (shape_.size() > 2) {
    throw DimensionError("tensor: rank " + std::to_string(shape_.size()) +
                         " has no matrix view");
  }
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.empty()) {
    return 1;
  }
  return shape_.back();
}

bool Tensor::same_shape(const Tensor& other) const {
  return rows() == other.rows() && cols() == other.cols() &&
         size() == other.size();
}

std::string Tensor::shape_string() const {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    out << (i ? "x" : "") << shape_[i];
  }
  out << ']';
  return out.str();
}

void Tensor::fill(double value) {
  std::fill(values_.begin(), values_.end(), value);
}

void Tensor::accumulate(const Tensor& other) {
  if (other.size() != size()) {
    throw DimensionError("tensor: cannot accumulate " + other.shape_string() +
                         " into " + shape_string());
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    values_[i] += other.values_[i];
  }
}

}  // namespace cot2::tensor
