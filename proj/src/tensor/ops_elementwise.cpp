#include <algorithm>
#include <cmath>

#include "flusense/tensor/ops.hpp"
#include "internal.hpp"

namespace flusense::tensor {

using detail::GradTarget;
using detail::NodeIds;
using detail::RecordingTape;
using detail::Require;

template <typename T>
BasicTensor<T> Add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  Require(a.shape() == b.shape(), "Add: shape mismatch " + ShapeString(a.shape()) + " vs " +
                                      ShapeString(b.shape()));
  auto out = BasicTensor<T>::Zeros(a.shape());
  auto od = out.data();
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] + bd[i];
  if (auto* tape = RecordingTape<T>({&a, &b})) {
    tape->Record("add", NodeIds<T>({&a, &b}), out, [a, b, out]() mutable {
      if (!out.has_grad()) return;
      const auto g = out.grad();
      for (auto* t : {&a, &b}) {
        auto tg = GradTarget(*t);
        for (std::size_t i = 0; i < tg.size(); ++i) tg[i] += g[i];
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> Mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  Require(a.shape() == b.shape(), "Mul: shape mismatch " + ShapeString(a.shape()) + " vs " +
                                      ShapeString(b.shape()));
  auto out = BasicTensor<T>::Zeros(a.shape());
  auto od = out.data();
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] * bd[i];
  if (auto* tape = RecordingTape<T>({&a, &b})) {
    tape->Record("mul", NodeIds<T>({&a, &b}), out, [a, b, out]() mutable {
      if (!out.has_grad()) return;
      const auto g = out.grad();
      if (auto ag = GradTarget(a); !ag.empty()) {
        const auto bd = b.data();
        for (std::size_t i = 0; i < ag.size(); ++i) ag[i] += g[i] * bd[i];
      }
      if (auto bg = GradTarget(b); !bg.empty()) {
        const auto ad = a.data();
        for (std::size_t i = 0; i < bg.size(); ++i) bg[i] += g[i] * ad[i];
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> Scale(const BasicTensor<T>& a, T factor) {
  auto out = BasicTensor<T>::Zeros(a.shape());
  auto od = out.data();
  const auto ad = a.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] * factor;
  if (auto* tape = RecordingTape<T>({&a})) {
    tape->Record("scale", NodeIds<T>({&a}), out, [a, out, factor]() mutable {
      if (!out.has_grad()) return;
      const auto g = out.grad();
      auto ag = GradTarget(a);
      for (std::size_t i = 0; i < ag.size(); ++i) ag[i] += g[i] * factor;
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> Relu(const BasicTensor<T>& a) {
  auto out = BasicTensor<T>::Zeros(a.shape());
  auto od = out.data();
  const auto ad = a.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] > T(0) ? ad[i] : T(0);
  if (auto* tape = RecordingTape<T>({&a})) {
    tape->Record("relu", NodeIds<T>({&a}), out, [a, out]() mutable {
      if (!out.has_grad()) return;
      const auto g = out.grad();
      const auto ad = a.data();
      auto ag = GradTarget(a);
      for (std::size_t i = 0; i < ag.size(); ++i) {
        if (ad[i] > T(0)) ag[i] += g[i];
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> AddBroadcast(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  Require(bs.size() <= as.size() && std::equal(bs.rbegin(), bs.rend(), as.rbegin()),
          "AddBroadcast: " + ShapeString(bs) + " is not a suffix of " + ShapeString(as));
  const std::size_t block = b.size();
  const std::size_t repeats = a.size() / block;
  auto out = BasicTensor<T>::Zeros(as);
  auto od = out.data();
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t r = 0; r < repeats; ++r) {
    for (std::size_t i = 0; i < block; ++i) od[r * block + i] = ad[r * block + i] + bd[i];
  }
  if (auto* tape = RecordingTape<T>({&a, &b})) {
    tape->Record("add_broadcast", NodeIds<T>({&a, &b}), out, [a, b, out, block, repeats]() mutable {
      if (!out.has_grad()) return;
      const auto g = out.grad();
      if (auto ag = GradTarget(a); !ag.empty()) {
        for (std::size_t i = 0; i < ag.size(); ++i) ag[i] += g[i];
      }
      if (auto bg = GradTarget(b); !bg.empty()) {
        for (std::size_t r = 0; r < repeats; ++r) {
          for (std::size_t i = 0; i < block; ++i) bg[i] += g[r * block + i];
        }
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> Sum(const BasicTensor<T>& a) {
  double total = 0.0;
  for (const T v : a.data()) total += v;
  auto out = BasicTensor<T>::Scalar(static_cast<T>(total));
  if (auto* tape = RecordingTape<T>({&a})) {
    tape->Record("sum", NodeIds<T>({&a}), out, [a, out]() mutable {
      if (!out.has_grad()) return;
      const T g = out.grad()[0];
      auto ag = GradTarget(a);
      for (auto& v : ag) v += g;
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> Mean(const BasicTensor<T>& a, std::size_t axis) {
  const auto& shape = a.shape();
  Require(axis < shape.size(), "Mean: axis out of range for " + ShapeString(shape));
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t extent = shape[axis];
  Shape out_shape;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != axis) out_shape.push_back(shape[i]);
  }
  if (out_shape.empty()) out_shape.push_back(1);
  auto out = BasicTensor<T>::Zeros(out_shape);
  auto od = out.data();
  const auto ad = a.data();
  std::vector<double> acc(inner);
  for (std::size_t o = 0; o < outer; ++o) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t e = 0; e < extent; ++e) {
      const T* row = ad.data() + (o * extent + e) * inner;
      for (std::size_t i = 0; i < inner; ++i) acc[i] += row[i];
    }
    for (std::size_t i = 0; i < inner; ++i) od[o * inner + i] = static_cast<T>(acc[i] / extent);
  }
  if (auto* tape = RecordingTape<T>({&a})) {
    tape->Record("mean", NodeIds<T>({&a}), out, [a, out, outer, inner, extent]() mutable {
      if (!out.has_grad()) return;
      const auto g = out.grad();
      auto ag = GradTarget(a);
      const T scale = T(1) / static_cast<T>(extent);
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t e = 0; e < extent; ++e) {
          T* row = ag.data() + (o * extent + e) * inner;
          for (std::size_t i = 0; i < inner; ++i) row[i] += g[o * inner + i] * scale;
        }
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> Reshape(const BasicTensor<T>& a, Shape shape) {
  Require(NumElements(shape) == a.size(),
          "Reshape: cannot view " + ShapeString(a.shape()) + " as " + ShapeString(shape));
  auto out = BasicTensor<T>::FromData(std::move(shape), std::vector<T>(a.data().begin(), a.data().end()));
  if (auto* tape = RecordingTape<T>({&a})) {
    tape->Record("reshape", NodeIds<T>({&a}), out, [a, out]() mutable {
      if (!out.has_grad()) return;
      const auto g = out.grad();
      auto ag = GradTarget(a);
      for (std::size_t i = 0; i < ag.size(); ++i) ag[i] += g[i];
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> TransposeLast2(const BasicTensor<T>& a) {
  const auto& shape = a.shape();
  Require(shape.size() >= 2, "TransposeLast2 needs rank >= 2, got " + ShapeString(shape));
  const std::size_t rows = shape[shape.size() - 2];
  const std::size_t cols = shape[shape.size() - 1];
  const std::size_t batch = a.size() / (rows * cols);
  Shape out_shape = shape;
  std::swap(out_shape[out_shape.size() - 2], out_shape[out_shape.size() - 1]);
  auto out = BasicTensor<T>::Zeros(out_shape);
  auto od = out.data();
  const auto ad = a.data();
  for (std::size_t b = 0; b < batch; ++b) {
    const T* src = ad.data() + b * rows * cols;
    T* dst = od.data() + b * rows * cols;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
    }
  }
  if (auto* tape = RecordingTape<T>({&a})) {
    tape->Record("transpose", NodeIds<T>({&a}), out, [a, out, batch, rows, cols]() mutable {
      if (!out.has_grad()) return;
      const auto g = out.grad();
      auto ag = GradTarget(a);
      for (std::size_t b = 0; b < batch; ++b) {
        const T* src = g.data() + b * rows * cols;
        T* dst = ag.data() + b * rows * cols;
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) dst[r * cols + c] += src[c * rows + r];
        }
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> Concat(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  Require(as.size() == bs.size() && std::equal(as.begin(), as.end() - 1, bs.begin()),
          "Concat: leading dimensions differ " + ShapeString(as) + " vs " + ShapeString(bs));
  const std::size_t wa = as.back();
  const std::size_t wb = bs.back();
  const std::size_t rows = a.size() / wa;
  Shape out_shape = as;
  out_shape.back() = wa + wb;
  auto out = BasicTensor<T>::Zeros(out_shape);
  auto od = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.data().data() + r * wa, wa, od.data() + r * (wa + wb));
    std::copy_n(b.data().data() + r * wb, wb, od.data() + r * (wa + wb) + wa);
  }
  if (auto* tape = RecordingTape<T>({&a, &b})) {
    tape->Record("concat", NodeIds<T>({&a, &b}), out, [a, b, out, rows, wa, wb]() mutable {
      if (!out.has_grad()) return;
      const auto g = out.grad();
      auto ag = GradTarget(a);
      auto bg = GradTarget(b);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* src = g.data() + r * (wa + wb);
        if (!ag.empty()) {
          for (std::size_t i = 0; i < wa; ++i) ag[r * wa + i] += src[i];
        }
        if (!bg.empty()) {
          for (std::size_t i = 0; i < wb; ++i) bg[r * wb + i] += src[wa + i];
        }
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> Dropout(const BasicTensor<T>& a, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout probability must lie in [0, 1)");
  if (!training || p == 0.0) return a;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  AlignedVector<T> mask(a.size());
  for (auto& m : mask) m = rng.Uniform() < p ? T(0) : keep_scale;
  auto out = BasicTensor<T>::Zeros(a.shape());
  auto od = out.data();
  const auto ad = a.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] * mask[i];
  if (auto* tape = RecordingTape<T>({&a})) {
    tape->Record("dropout", NodeIds<T>({&a}), out, [a, out, mask = std::move(mask)]() mutable {
      if (!out.has_grad()) return;
      const auto g = out.grad();
      auto ag = GradTarget(a);
      for (std::size_t i = 0; i < ag.size(); ++i) ag[i] += g[i] * mask[i];
    });
  }
  return out;
}

#define INSTANTIATE(T)                                                                         \
  template BasicTensor<T> Add(const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template BasicTensor<T> Mul(const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template BasicTensor<T> Scale(const BasicTensor<T>&, T);                                     \
  template BasicTensor<T> Relu(const BasicTensor<T>&);                                         \
  template BasicTensor<T> AddBroadcast(const BasicTensor<T>&, const BasicTensor<T>&);          \
  template BasicTensor<T> Sum(const BasicTensor<T>&);                                          \
  template BasicTensor<T> Mean(const BasicTensor<T>&, std::size_t);                            \
  template BasicTensor<T> Reshape(const BasicTensor<T>&, Shape);                               \
  template BasicTensor<T> TransposeLast2(const BasicTensor<T>&);                               \
  template BasicTensor<T> Concat(const BasicTensor<T>&, const BasicTensor<T>&);                \
  template BasicTensor<T> Dropout(const BasicTensor<T>&, double, bool, Rng&);
FLUSENSE_INSTANTIATE_FLOAT_DOUBLE(INSTANTIATE)
#undef INSTANTIATE

}  // namespace flusense::tensor
