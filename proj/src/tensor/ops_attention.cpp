#include <cmath>

#include "flusense/tensor/ops.hpp"
#include "internal.hpp"

namespace flusense::tensor {

using detail::ConstStridedMap;
using detail::GradTarget;
using detail::MatrixMap;
using detail::NodeIds;
using detail::RecordingTape;
using detail::Require;
using detail::RowMatrix;
using detail::StridedMap;

namespace {

struct AttentionGeometry {
  std::size_t batch, length, width, heads, head_width;
};

template <typename T>
AttentionGeometry CheckAttention(const BasicTensor<T>& q, const BasicTensor<T>& k,
                                 const BasicTensor<T>& v, std::size_t heads) {
  Require(q.rank() == 2 || q.rank() == 3, "attention inputs must be (L, d) or (B, L, d), got " +
                                              ShapeString(q.shape()));
  Require(q.shape() == k.shape() && q.shape() == v.shape(), "attention: q, k, v shapes differ");
  AttentionGeometry g{};
  g.batch = q.rank() == 3 ? q.dim(0) : 1;
  g.length = q.dim(q.rank() - 2);
  g.width = q.dim(q.rank() - 1);
  g.heads = heads;
  if (heads == 0 || g.width % heads != 0) {
    throw ConfigError("attention width " + std::to_string(g.width) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  g.head_width = g.width / heads;
  return g;
}

// Fills probs (heads*L rows of L) for one batch element and writes the
// attended values into out.
template <typename T>
void AttentionForward(const T* q, const T* k, const T* v, const AttentionGeometry& g, T* probs, T* out) {
  const auto L = static_cast<Eigen::Index>(g.length);
  const auto dh = static_cast<Eigen::Index>(g.head_width);
  const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(g.width));
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(g.head_width)));
  for (std::size_t h = 0; h < g.heads; ++h) {
    const ConstStridedMap<T> qh(q + h * g.head_width, L, dh, stride);
    const ConstStridedMap<T> kh(k + h * g.head_width, L, dh, stride);
    const ConstStridedMap<T> vh(v + h * g.head_width, L, dh, stride);
    MatrixMap<T> p(probs + h * g.length * g.length, L, L);
    p.noalias() = (qh * kh.transpose()) * scale;
    for (Eigen::Index r = 0; r < L; ++r) {
      auto row = p.row(r).array();
      row = (row - row.maxCoeff()).exp();
      row /= row.sum();
    }
    StridedMap<T> oh(out + h * g.head_width, L, dh, stride);
    oh.noalias() = p * vh;
  }
}

}  // namespace

template <typename T>
BasicTensor<T> ScaledDotProductAttention(const BasicTensor<T>& q, const BasicTensor<T>& k,
                                         const BasicTensor<T>& v, std::size_t heads) {
  const AttentionGeometry g = CheckAttention(q, k, v, heads);
  auto out = BasicTensor<T>::Zeros(q.shape());
  const std::size_t block = g.length * g.width;
  const std::size_t prob_block = g.heads * g.length * g.length;
  AlignedVector<T> probs(g.batch * prob_block);
  for (std::size_t b = 0; b < g.batch; ++b) {
    AttentionForward(q.data().data() + b * block, k.data().data() + b * block, v.data().data() + b * block, g,
                     probs.data() + b * prob_block, out.data().data() + b * block);
  }
  if (auto* tape = RecordingTape<T>({&q, &k, &v})) {
    tape->Record("attention", NodeIds<T>({&q, &k, &v}), out,
                 [q, k, v, out, g, block, prob_block, probs = std::move(probs)]() mutable {
                   if (!out.has_grad()) return;
                   auto qg = GradTarget(q);
                   auto kg = GradTarget(k);
                   auto vg = GradTarget(v);
                   const auto L = static_cast<Eigen::Index>(g.length);
                   const auto dh = static_cast<Eigen::Index>(g.head_width);
                   const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(g.width));
                   const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(g.head_width)));
                   RowMatrix<T> dp(L, L);
                   for (std::size_t b = 0; b < g.batch; ++b) {
                     for (std::size_t h = 0; h < g.heads; ++h) {
                       const std::size_t off = b * block + h * g.head_width;
                       const detail::ConstMatrixMap<T> p(probs.data() + b * prob_block + h * g.length * g.length, L, L);
                       const ConstStridedMap<T> go(out.grad().data() + off, L, dh, stride);
                       const ConstStridedMap<T> qh(q.data().data() + off, L, dh, stride);
                       const ConstStridedMap<T> kh(k.data().data() + off, L, dh, stride);
                       const ConstStridedMap<T> vh(v.data().data() + off, L, dh, stride);
                       if (!vg.empty()) {
                         StridedMap<T>(vg.data() + off, L, dh, stride).noalias() += p.transpose() * go;
                       }
                       if (qg.empty() && kg.empty()) continue;
                       dp.noalias() = go * vh.transpose();
                       // dS = P * (dP - rowsum(dP * P))
                       for (Eigen::Index r = 0; r < L; ++r) {
                         const T dot = (dp.row(r).array() * p.row(r).array()).sum();
                         dp.row(r).array() = p.row(r).array() * (dp.row(r).array() - dot) * scale;
                       }
                       if (!qg.empty()) {
                         StridedMap<T>(qg.data() + off, L, dh, stride).noalias() += dp * kh;
                       }
                       if (!kg.empty()) {
                         StridedMap<T>(kg.data() + off, L, dh, stride).noalias() += dp.transpose() * qh;
                       }
                     }
                   }
                 });
  }
  return out;
}

template <typename T>
BasicTensor<T> MultiHeadAttention(const BasicTensor<T>& x, const AttentionWeights<T>& w, std::size_t heads) {
  const auto q = Linear(x, w.query_weight, w.query_bias);
  const auto k = Linear(x, w.key_weight, w.key_bias);
  const auto v = Linear(x, w.value_weight, w.value_bias);
  const auto attended = ScaledDotProductAttention(q, k, v, heads);
  return Linear(attended, w.output_weight, w.output_bias);
}

template <typename T>
BasicTensor<T> AttentionProbabilities(const BasicTensor<T>& x, const AttentionWeights<T>& w, std::size_t heads) {
  const auto q = Linear(x.Detach(), w.query_weight.Detach(), w.query_bias.Detach());
  const auto k = Linear(x.Detach(), w.key_weight.Detach(), w.key_bias.Detach());
  const auto v = Linear(x.Detach(), w.value_weight.Detach(), w.value_bias.Detach());
  const AttentionGeometry g = CheckAttention(q, k, v, heads);
  auto probs = BasicTensor<T>::Zeros({g.batch, g.heads, g.length, g.length});
  AlignedVector<T> scratch(g.length * g.width);
  const std::size_t block = g.length * g.width;
  for (std::size_t b = 0; b < g.batch; ++b) {
    AttentionForward(q.data().data() + b * block, k.data().data() + b * block, v.data().data() + b * block, g,
                     probs.data().data() + b * g.heads * g.length * g.length, scratch.data());
  }
  return probs;
}

#define INSTANTIATE(T)                                                                             \
  template BasicTensor<T> ScaledDotProductAttention(const BasicTensor<T>&, const BasicTensor<T>&,  \
                                                    const BasicTensor<T>&, std::size_t);           \
  template BasicTensor<T> MultiHeadAttention(const BasicTensor<T>&, const AttentionWeights<T>&,    \
                                             std::size_t);                                         \
  template BasicTensor<T> AttentionProbabilities(const BasicTensor<T>&, const AttentionWeights<T>&, \
                                                 std::size_t);
FLUSENSE_INSTANTIATE_FLOAT_DOUBLE(INSTANTIATE)
#undef INSTANTIATE

}  // namespace flusense::tensor
