#include "flusense/tensor/ops.hpp"
#include "internal.hpp"

namespace flusense::tensor {

using detail::ConstMatrixMap;
using detail::GradTarget;
using detail::MatrixMap;
using detail::NodeIds;
using detail::RecordingTape;
using detail::Require;
using detail::RowMatrix;

std::size_t Conv1dOutputLength(std::size_t length, std::size_t kernel, std::size_t stride) {
  if (stride == 0) throw DimensionError("conv1d stride must be positive");
  if (kernel == 0 || kernel > length) {
    throw DimensionError("conv1d kernel " + std::to_string(kernel) + " exceeds input length " +
                         std::to_string(length));
  }
  return (length - kernel) / stride + 1;
}

std::size_t Deconv1dOutputLength(std::size_t length, std::size_t kernel, std::size_t stride,
                                 std::size_t output_padding) {
  if (stride == 0 || kernel == 0 || length == 0) {
    throw DimensionError("deconv1d requires positive length, kernel and stride");
  }
  return (length - 1) * stride + kernel + output_padding;
}

namespace {

struct ConvGeometry {
  std::size_t batch, in_channels, in_length, out_channels, kernel, stride, out_length;
  bool batched;
};

template <typename T>
ConvGeometry CheckConv(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                       const BasicTensor<T>& bias, std::size_t stride) {
  Require(input.rank() == 2 || input.rank() == 3,
          "conv1d input must be (C, L) or (B, C, L), got " + ShapeString(input.shape()));
  Require(weight.rank() == 3, "conv1d weight must be (C_out, C_in, K), got " + ShapeString(weight.shape()));
  ConvGeometry g{};
  g.batched = input.rank() == 3;
  g.batch = g.batched ? input.dim(0) : 1;
  g.in_channels = input.dim(input.rank() - 2);
  g.in_length = input.dim(input.rank() - 1);
  g.out_channels = weight.dim(0);
  g.kernel = weight.dim(2);
  g.stride = stride;
  Require(weight.dim(1) == g.in_channels,
          "conv1d: weight expects " + std::to_string(weight.dim(1)) + " input channels, input has " +
              std::to_string(g.in_channels));
  Require(bias.size() == g.out_channels, "conv1d: bias size does not match output channels");
  g.out_length = Conv1dOutputLength(g.in_length, g.kernel, stride);
  return g;
}

// col[t, c*K + k] = x[c, t*stride + k]
template <typename T>
void Im2Col(const T* x, const ConvGeometry& g, RowMatrix<T>& col) {
  col.resize(static_cast<Eigen::Index>(g.out_length), static_cast<Eigen::Index>(g.in_channels * g.kernel));
  for (std::size_t t = 0; t < g.out_length; ++t) {
    T* row = col.data() + t * g.in_channels * g.kernel;
    for (std::size_t c = 0; c < g.in_channels; ++c) {
      const T* src = x + c * g.in_length + t * g.stride;
      for (std::size_t k = 0; k < g.kernel; ++k) row[c * g.kernel + k] = src[k];
    }
  }
}

template <typename T>
void Col2ImAdd(const RowMatrix<T>& col, const ConvGeometry& g, T* dx) {
  for (std::size_t t = 0; t < g.out_length; ++t) {
    const T* row = col.data() + t * g.in_channels * g.kernel;
    for (std::size_t c = 0; c < g.in_channels; ++c) {
      T* dst = dx + c * g.in_length + t * g.stride;
      for (std::size_t k = 0; k < g.kernel; ++k) dst[k] += row[c * g.kernel + k];
    }
  }
}

}  // namespace

template <typename T>
BasicTensor<T> Conv1d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, std::size_t stride) {
  const ConvGeometry g = CheckConv(input, weight, bias, stride);
  Shape out_shape = g.batched ? Shape{g.batch, g.out_channels, g.out_length} : Shape{g.out_channels, g.out_length};
  auto out = BasicTensor<T>::Zeros(out_shape);
  const std::size_t ck = g.in_channels * g.kernel;
  const ConstMatrixMap<T> w(weight.data().data(), g.out_channels, ck);
  RowMatrix<T> col;
  for (std::size_t b = 0; b < g.batch; ++b) {
    Im2Col(input.data().data() + b * g.in_channels * g.in_length, g, col);
    MatrixMap<T> y(out.data().data() + b * g.out_channels * g.out_length, g.out_channels, g.out_length);
    y.noalias() = w * col.transpose();
    y.colwise() += ConstMatrixMap<T>(bias.data().data(), g.out_channels, 1).col(0);
  }
  if (auto* tape = RecordingTape<T>({&input, &weight, &bias})) {
    tape->Record("conv1d", NodeIds<T>({&input, &weight, &bias}), out,
                 [input, weight, bias, out, g, ck]() mutable {
                   if (!out.has_grad()) return;
                   auto xg = GradTarget(input);
                   auto wg = GradTarget(weight);
                   auto bg = GradTarget(bias);
                   const ConstMatrixMap<T> w(weight.data().data(), g.out_channels, ck);
                   RowMatrix<T> col;
                   RowMatrix<T> dcol;
                   for (std::size_t b = 0; b < g.batch; ++b) {
                     const ConstMatrixMap<T> gy(out.grad().data() + b * g.out_channels * g.out_length,
                                                g.out_channels, g.out_length);
                     if (!wg.empty()) {
                       Im2Col(input.data().data() + b * g.in_channels * g.in_length, g, col);
                       MatrixMap<T>(wg.data(), g.out_channels, ck).noalias() += gy * col;
                     }
                     if (!xg.empty()) {
                       dcol.noalias() = gy.transpose() * w;
                       Col2ImAdd(dcol, g, xg.data() + b * g.in_channels * g.in_length);
                     }
                     if (!bg.empty()) {
                       MatrixMap<T>(bg.data(), g.out_channels, 1) += gy.rowwise().sum();
                     }
                   }
                 });
  }
  return out;
}

template <typename T>
BasicTensor<T> Deconv1d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                        const BasicTensor<T>& bias, std::size_t stride, std::size_t output_padding) {
  Require(input.rank() == 2 || input.rank() == 3,
          "deconv1d input must be (C, L) or (B, C, L), got " + ShapeString(input.shape()));
  Require(weight.rank() == 3, "deconv1d weight must be (C_in, C_out, K), got " + ShapeString(weight.shape()));
  const bool batched = input.rank() == 3;
  const std::size_t batch = batched ? input.dim(0) : 1;
  const std::size_t cin = input.dim(input.rank() - 2);
  const std::size_t len = input.dim(input.rank() - 1);
  Require(weight.dim(0) == cin, "deconv1d: weight expects " + std::to_string(weight.dim(0)) +
                                    " input channels, input has " + std::to_string(cin));
  const std::size_t cout = weight.dim(1);
  const std::size_t kernel = weight.dim(2);
  Require(bias.size() == cout, "deconv1d: bias size does not match output channels");
  if (stride > 0 && output_padding >= stride) {
    throw DimensionError("deconv1d output padding must be smaller than the stride");
  }
  const std::size_t out_len = Deconv1dOutputLength(len, kernel, stride, output_padding);
  Shape out_shape = batched ? Shape{batch, cout, out_len} : Shape{cout, out_len};
  auto out = BasicTensor<T>::Zeros(out_shape);
  const std::size_t ck = cout * kernel;
  const ConstMatrixMap<T> w(weight.data().data(), cin, ck);
  RowMatrix<T> col;
  for (std::size_t b = 0; b < batch; ++b) {
    const ConstMatrixMap<T> x(input.data().data() + b * cin * len, cin, len);
    col.noalias() = x.transpose() * w;  // (L, C_out*K)
    T* y = out.data().data() + b * cout * out_len;
    for (std::size_t c = 0; c < cout; ++c) {
      T* dst = y + c * out_len;
      const T bc = bias.data()[c];
      for (std::size_t i = 0; i < out_len; ++i) dst[i] = bc;
      for (std::size_t t = 0; t < len; ++t) {
        const T* src = col.data() + t * ck + c * kernel;
        for (std::size_t k = 0; k < kernel; ++k) dst[t * stride + k] += src[k];
      }
    }
  }
  if (auto* tape = RecordingTape<T>({&input, &weight, &bias})) {
    tape->Record("deconv1d", NodeIds<T>({&input, &weight, &bias}), out,
                 [input, weight, bias, out, batch, cin, len, cout, kernel, stride, out_len, ck]() mutable {
                   if (!out.has_grad()) return;
                   auto xg = GradTarget(input);
                   auto wg = GradTarget(weight);
                   auto bg = GradTarget(bias);
                   const ConstMatrixMap<T> w(weight.data().data(), cin, ck);
                   RowMatrix<T> dcol(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(ck));
                   for (std::size_t b = 0; b < batch; ++b) {
                     const T* gy = out.grad().data() + b * cout * out_len;
                     for (std::size_t c = 0; c < cout; ++c) {
                       const T* src = gy + c * out_len;
                       if (!bg.empty()) {
                         double s = 0.0;
                         for (std::size_t i = 0; i < out_len; ++i) s += src[i];
                         bg[c] += static_cast<T>(s);
                       }
                       for (std::size_t t = 0; t < len; ++t) {
                         T* dst = dcol.data() + t * ck + c * kernel;
                         for (std::size_t k = 0; k < kernel; ++k) dst[k] = src[t * stride + k];
                       }
                     }
                     if (!wg.empty()) {
                       const ConstMatrixMap<T> x(input.data().data() + b * cin * len, cin, len);
                       MatrixMap<T>(wg.data(), cin, ck).noalias() += x * dcol;
                     }
                     if (!xg.empty()) {
                       MatrixMap<T>(xg.data() + b * cin * len, cin, len).noalias() += w * dcol.transpose();
                     }
                   }
                 });
  }
  return out;
}

#define INSTANTIATE(T)                                                                             \
  template BasicTensor<T> Conv1d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, \
                                 std::size_t);                                                     \
  template BasicTensor<T> Deconv1d(const BasicTensor<T>&, const BasicTensor<T>&,                   \
                                   const BasicTensor<T>&, std::size_t, std::size_t);
FLUSENSE_INSTANTIATE_FLOAT_DOUBLE(INSTANTIATE)
#undef INSTANTIATE

}  // namespace flusense::tensor
