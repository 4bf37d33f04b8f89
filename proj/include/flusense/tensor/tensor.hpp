#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace flusense::tensor {

using Shape = std::vector<std::size_t>;

std::size_t NumElements(const Shape& shape);
std::string ShapeString(const Shape& shape);

// 64-byte aligned buffers. Vectorized reductions peel a prefix that depends
// on the start address; fixing the alignment fixes the summation order, so
// results do not vary with where the heap placed a buffer.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlignment); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

template <typename T>
struct TensorStorage {
  Shape shape;
  AlignedVector<T> data;
  AlignedVector<T> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  std::int64_t node_id = -1;  // index of the producing op on the active tape
};

// Dense row-major array with shared ownership: copies of a BasicTensor alias
// the same storage. Training uses Tensor (fp32); gradient checks use Tensor64.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  static BasicTensor Zeros(Shape shape, bool requires_grad = false);
  static BasicTensor Full(Shape shape, T value, bool requires_grad = false);
  static BasicTensor FromData(Shape shape, std::vector<T> data, bool requires_grad = false);
  static BasicTensor Scalar(T value, bool requires_grad = false);

  bool defined() const { return storage_ != nullptr; }
  const Shape& shape() const { return storage_->shape; }
  std::size_t rank() const { return storage_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return storage_->shape.at(axis); }
  std::size_t size() const { return storage_->data.size(); }

  std::span<T> data() { return storage_->data; }
  std::span<const T> data() const { return storage_->data; }
  T item() const;
  T operator[](std::size_t i) const { return storage_->data[i]; }

  bool requires_grad() const { return storage_->requires_grad; }
  void set_requires_grad(bool value) { storage_->requires_grad = value; }
  bool has_grad() const { return !storage_->grad.empty(); }
  std::span<const T> grad() const { return storage_->grad; }
  // Allocates a zero gradient buffer on first use.
  std::span<T> MutableGrad();
  void ZeroGrad();
  void ClearGrad() { storage_->grad.clear(); storage_->grad.shrink_to_fit(); }

  std::int64_t node_id() const { return storage_->node_id; }
  void set_node_id(std::int64_t id) { storage_->node_id = id; }

  // Deep copy of the values; the copy is a leaf with no gradient.
  BasicTensor Detach() const;
  bool SharesStorage(const BasicTensor& other) const { return storage_ == other.storage_; }

 private:
  std::shared_ptr<TensorStorage<T>> storage_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Ordered record of differentiable ops. Ops executed while a tape is active
// on the current thread and with at least one grad-requiring input append an
// entry; Backward() replays entries in exact reverse order. Inference runs
// without an active tape and records nothing.
template <typename T>
class BasicTape {
 public:
  struct Entry {
    const char* op;
    std::vector<std::int64_t> inputs;  // -1 for leaves
    std::int64_t output;
    std::function<void()> backward;
  };

  BasicTape() = default;
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  void Record(const char* op, std::vector<std::int64_t> inputs, BasicTensor<T>& output,
              std::function<void()> backward);
  // Seeds d(loss)/d(loss) = 1 and propagates to every grad-requiring tensor.
  // Gradients accumulate additively.
  void Backward(const BasicTensor<T>& loss);
  void Clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

  static BasicTape* Active() { return active_; }

 private:
  template <typename>
  friend class BasicTapeScope;
  std::vector<Entry> entries_;
  static thread_local BasicTape* active_;
};

template <typename T>
thread_local BasicTape<T>* BasicTape<T>::active_ = nullptr;

// Installs a tape as the active one on this thread for the scope's lifetime.
template <typename T>
class BasicTapeScope {
 public:
  explicit BasicTapeScope(BasicTape<T>& tape) : previous_(BasicTape<T>::active_) {
    BasicTape<T>::active_ = &tape;
  }
  ~BasicTapeScope() { BasicTape<T>::active_ = previous_; }
  BasicTapeScope(const BasicTapeScope&) = delete;
  BasicTapeScope& operator=(const BasicTapeScope&) = delete;

 private:
  BasicTape<T>* previous_;
};

using Tape = BasicTape<float>;
using Tape64 = BasicTape<double>;
using TapeScope = BasicTapeScope<float>;
using TapeScope64 = BasicTapeScope<double>;

}  // namespace flusense::tensor
