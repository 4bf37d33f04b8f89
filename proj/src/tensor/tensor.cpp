#include "flusense/tensor/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "flusense/common/errors.hpp"

namespace flusense::tensor {

std::size_t NumElements(const Shape& shape) {
  std::size_t n = 1;
  for (const std::size_t extent : shape) n *= extent;
  return n;
}

std::string ShapeString(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ')';
  return out.str();
}

template <typename T>
BasicTensor<T> BasicTensor<T>::Zeros(Shape shape, bool requires_grad) {
  return Full(std::move(shape), T(0), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::Full(Shape shape, T value, bool requires_grad) {
  for (const std::size_t extent : shape) {
    if (extent == 0) throw DimensionError("tensor extents must be positive: " + ShapeString(shape));
  }
  BasicTensor t;
  t.storage_ = std::make_shared<TensorStorage<T>>();
  t.storage_->data.assign(NumElements(shape), value);
  t.storage_->shape = std::move(shape);
  t.storage_->requires_grad = requires_grad;
  return t;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::FromData(Shape shape, std::vector<T> data, bool requires_grad) {
  for (const std::size_t extent : shape) {
    if (extent == 0) throw DimensionError("tensor extents must be positive: " + ShapeString(shape));
  }
  if (NumElements(shape) != data.size()) {
    throw DimensionError("shape " + ShapeString(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  BasicTensor t;
  t.storage_ = std::make_shared<TensorStorage<T>>();
  t.storage_->shape = std::move(shape);
  t.storage_->data.assign(data.begin(), data.end());
  t.storage_->requires_grad = requires_grad;
  return t;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::Scalar(T value, bool requires_grad) {
  return FromData({1}, {value}, requires_grad);
}

template <typename T>
T BasicTensor<T>::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + ShapeString(shape()));
  return storage_->data[0];
}

template <typename T>
std::span<T> BasicTensor<T>::MutableGrad() {
  if (storage_->grad.size() != storage_->data.size()) storage_->grad.assign(storage_->data.size(), T(0));
  return storage_->grad;
}

template <typename T>
void BasicTensor<T>::ZeroGrad() {
  if (has_grad()) std::fill(storage_->grad.begin(), storage_->grad.end(), T(0));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::Detach() const {
  return FromData(storage_->shape, std::vector<T>(storage_->data.begin(), storage_->data.end()), false);
}

template <typename T>
void BasicTape<T>::Record(const char* op, std::vector<std::int64_t> inputs, BasicTensor<T>& output,
                          std::function<void()> backward) {
  const auto id = static_cast<std::int64_t>(entries_.size());
  output.set_requires_grad(true);
  output.set_node_id(id);
  entries_.push_back(Entry{op, std::move(inputs), id, std::move(backward)});
}

template <typename T>
void BasicTape<T>::Backward(const BasicTensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw DimensionError("backward() requires a scalar loss");
  }
  const auto id = loss.node_id();
  if (id < 0 || id >= static_cast<std::int64_t>(entries_.size()) || entries_[id].output != id) {
    throw std::logic_error("backward(): loss was not produced on this tape");
  }
  BasicTensor<T> seed = loss;
  seed.MutableGrad()[0] += T(1);
  for (std::int64_t i = id; i >= 0; --i) entries_[i].backward();
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template class BasicTape<float>;
template class BasicTape<double>;

}  // namespace flusense::tensor
