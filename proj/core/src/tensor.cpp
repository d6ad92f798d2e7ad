// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#include "shotnet/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace shotnet {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int e : shape) {
    if (e < 1) throw ShapeError("tensor extent must be >= 1, got shape " + shape_string(shape));
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

void require_same_shape(const Shape& a, const Shape& b, const std::string& what) {
  if (a != b) {
    throw ShapeError(what + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
  }
}

void require_rank(const Shape& shape, std::size_t rank, const std::string& what) {
  if (shape.size() != rank) {
    throw ShapeError(what + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(shape));
  }
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (shape_numel(shape_) != data_.size()) {
    throw ShapeError("tensor of shape " + shape_string(shape_) + " given " +
                     std::to_string(data_.size()) + " values");
  }
}

template <typename T>
std::span<T> Tensor<T>::grad() {
  if (grad_.size() != data_.size()) grad_.assign(data_.size(), T(0));
  return grad_;
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(grad_.begin(), grad_.end(), T(0));
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace shotnet
