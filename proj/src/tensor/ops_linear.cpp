#include "flusense/tensor/ops.hpp"
#include "internal.hpp"

namespace flusense::tensor {

using detail::ConstMatrixMap;
using detail::GradTarget;
using detail::MatrixMap;
using detail::NodeIds;
using detail::RecordingTape;
using detail::Require;

template <typename T>
BasicTensor<T> MatMul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  Require(a.rank() == 2 && b.rank() == 2,
          "MatMul expects rank-2 operands, got " + ShapeString(a.shape()) + " and " +
              ShapeString(b.shape()));
  const std::size_t p = a.dim(0);
  const std::size_t q = a.dim(1);
  const std::size_t r = b.dim(1);
  Require(b.dim(0) == q, "MatMul: inner dimensions differ " + ShapeString(a.shape()) + " x " +
                             ShapeString(b.shape()));
  auto out = BasicTensor<T>::Zeros({p, r});
  MatrixMap<T>(out.data().data(), p, r).noalias() =
      ConstMatrixMap<T>(a.data().data(), p, q) * ConstMatrixMap<T>(b.data().data(), q, r);
  if (auto* tape = RecordingTape<T>({&a, &b})) {
    tape->Record("matmul", NodeIds<T>({&a, &b}), out, [a, b, out, p, q, r]() mutable {
      if (!out.has_grad()) return;
      const ConstMatrixMap<T> g(out.grad().data(), p, r);
      if (auto ag = GradTarget(a); !ag.empty()) {
        MatrixMap<T>(ag.data(), p, q).noalias() += g * ConstMatrixMap<T>(b.data().data(), q, r).transpose();
      }
      if (auto bg = GradTarget(b); !bg.empty()) {
        MatrixMap<T>(bg.data(), q, r).noalias() += ConstMatrixMap<T>(a.data().data(), p, q).transpose() * g;
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> Linear(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
  Require(weight.rank() == 2, "Linear: weight must be (in, out), got " + ShapeString(weight.shape()));
  const std::size_t in = weight.dim(0);
  const std::size_t width = weight.dim(1);
  Require(x.shape().back() == in, "Linear: input width " + std::to_string(x.shape().back()) +
                                      " does not match weight " + ShapeString(weight.shape()));
  Require(bias.size() == width, "Linear: bias size does not match output width");
  const std::size_t rows = x.size() / in;
  Shape out_shape = x.shape();
  out_shape.back() = width;
  auto out = BasicTensor<T>::Zeros(out_shape);
  MatrixMap<T> y(out.data().data(), rows, width);
  y.noalias() = ConstMatrixMap<T>(x.data().data(), rows, in) * ConstMatrixMap<T>(weight.data().data(), in, width);
  y.rowwise() += ConstMatrixMap<T>(bias.data().data(), 1, width).row(0);
  if (auto* tape = RecordingTape<T>({&x, &weight, &bias})) {
    tape->Record("linear", NodeIds<T>({&x, &weight, &bias}), out,
                 [x, weight, bias, out, rows, in, width]() mutable {
                   if (!out.has_grad()) return;
                   const ConstMatrixMap<T> g(out.grad().data(), rows, width);
                   if (auto xg = GradTarget(x); !xg.empty()) {
                     MatrixMap<T>(xg.data(), rows, in).noalias() +=
                         g * ConstMatrixMap<T>(weight.data().data(), in, width).transpose();
                   }
                   if (auto wg = GradTarget(weight); !wg.empty()) {
                     MatrixMap<T>(wg.data(), in, width).noalias() +=
                         ConstMatrixMap<T>(x.data().data(), rows, in).transpose() * g;
                   }
                   if (auto bg = GradTarget(bias); !bg.empty()) {
                     MatrixMap<T>(bg.data(), 1, width) += g.colwise().sum();
                   }
                 });
  }
  return out;
}

#define INSTANTIATE(T)                                                               \
  template BasicTensor<T> MatMul(const BasicTensor<T>&, const BasicTensor<T>&);      \
  template BasicTensor<T> Linear(const BasicTensor<T>&, const BasicTensor<T>&,       \
                                 const BasicTensor<T>&);
FLUSENSE_INSTANTIATE_FLOAT_DOUBLE(INSTANTIATE)
#undef INSTANTIATE

}  // namespace flusense::tensor
