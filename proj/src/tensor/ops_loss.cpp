#include <cmath>

#include "flusense/tensor/ops.hpp"
#include "internal.hpp"

namespace flusense::tensor {

using detail::GradTarget;
using detail::NodeIds;
using detail::RecordingTape;
using detail::Require;

template <typename T>
BasicTensor<T> CrossEntropyLoss(const BasicTensor<T>& logits, std::span<const int> labels,
                                std::span<const T> class_weights) {
  Require(logits.rank() == 2, "cross entropy expects (B, k) logits, got " + ShapeString(logits.shape()));
  const std::size_t batch = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  Require(labels.size() == batch, "cross entropy: label count does not match batch");
  Require(class_weights.empty() || class_weights.size() == classes,
          "cross entropy: class weight count does not match class count");
  const auto x = logits.data();
  AlignedVector<T> probs(batch * classes);
  std::vector<double> sample_weight(batch, 1.0);
  double total = 0.0;
  double weight_sum = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const int label = labels[b];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw std::out_of_range("cross entropy: label " + std::to_string(label) + " outside [0, " +
                              std::to_string(classes) + ")");
    }
    const T* row = x.data() + b * classes;
    double max_value = row[0];
    for (std::size_t c = 1; c < classes; ++c) max_value = std::max<double>(max_value, row[c]);
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) denom += std::exp(row[c] - max_value);
    const double log_denom = std::log(denom) + max_value;
    for (std::size_t c = 0; c < classes; ++c) probs[b * classes + c] = static_cast<T>(std::exp(row[c] - log_denom));
    if (!class_weights.empty()) sample_weight[b] = class_weights[static_cast<std::size_t>(label)];
    total += sample_weight[b] * (log_denom - row[label]);
    weight_sum += sample_weight[b];
  }
  if (weight_sum <= 0.0) throw DataError("cross entropy: total sample weight is zero");
  auto out = BasicTensor<T>::Scalar(static_cast<T>(total / weight_sum));
  if (auto* tape = RecordingTape<T>({&logits})) {
    std::vector<int> label_copy(labels.begin(), labels.end());
    tape->Record("cross_entropy", NodeIds<T>({&logits}), out,
                 [logits, out, probs = std::move(probs), sample_weight = std::move(sample_weight),
                  label_copy = std::move(label_copy), batch, classes, weight_sum]() mutable {
                   if (!out.has_grad()) return;
                   const double g = out.grad()[0];
                   auto lg = GradTarget(logits);
                   for (std::size_t b = 0; b < batch; ++b) {
                     const double scale = g * sample_weight[b] / weight_sum;
                     for (std::size_t c = 0; c < classes; ++c) {
                       const double onehot = static_cast<int>(c) == label_copy[b] ? 1.0 : 0.0;
                       lg[b * classes + c] += static_cast<T>(scale * (probs[b * classes + c] - onehot));
                     }
                   }
                 });
  }
  return out;
}

template <typename T>
BasicTensor<T> MseLoss(const BasicTensor<T>& prediction, const BasicTensor<T>& target, const BasicTensor<T>* mask) {
  Require(prediction.shape() == target.shape(), "mse: prediction " + ShapeString(prediction.shape()) +
                                                    " vs target " + ShapeString(target.shape()));
  if (mask != nullptr) {
    Require(mask->shape() == prediction.shape(), "mse: mask shape differs from prediction");
  }
  const auto p = prediction.data();
  const auto t = target.data();
  double total = 0.0;
  double count = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = mask != nullptr ? static_cast<double>(mask->data()[i]) : 1.0;
    if (m == 0.0) continue;
    const double diff = static_cast<double>(p[i]) - t[i];
    total += m * diff * diff;
    count += m;
  }
  if (count <= 0.0) throw DataError("mse: mask selects no entries");
  auto out = BasicTensor<T>::Scalar(static_cast<T>(total / count));
  if (auto* tape = RecordingTape<T>({&prediction})) {
    BasicTensor<T> mask_copy = mask != nullptr ? *mask : BasicTensor<T>();
    tape->Record("mse", NodeIds<T>({&prediction}), out,
                 [prediction, target, mask_copy, out, count]() mutable {
                   if (!out.has_grad()) return;
                   const double g = out.grad()[0];
                   const auto p = prediction.data();
                   const auto t = target.data();
                   auto pg = GradTarget(prediction);
                   const double scale = 2.0 * g / count;
                   for (std::size_t i = 0; i < p.size(); ++i) {
                     const double m = mask_copy.defined() ? static_cast<double>(mask_copy.data()[i]) : 1.0;
                     if (m == 0.0) continue;
                     pg[i] += static_cast<T>(scale * m * (static_cast<double>(p[i]) - t[i]));
                   }
                 });
  }
  return out;
}

#define INSTANTIATE(T)                                                                           \
  template BasicTensor<T> CrossEntropyLoss(const BasicTensor<T>&, std::span<const int>,         \
                                           std::span<const T>);                                 \
  template BasicTensor<T> MseLoss(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>*);
FLUSENSE_INSTANTIATE_FLOAT_DOUBLE(INSTANTIATE)
#undef INSTANTIATE

}  // namespace flusense::tensor
