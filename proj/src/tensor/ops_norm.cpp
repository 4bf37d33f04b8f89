#include <cmath>

#include "flusense/tensor/ops.hpp"
#include "internal.hpp"

namespace flusense::tensor {

using detail::GradTarget;
using detail::NodeIds;
using detail::RecordingTape;
using detail::Require;

template <typename T>
BatchNormState<T> BatchNormState<T>::Create(std::size_t channels) {
  BatchNormState state;
  state.running_mean = BasicTensor<T>::Zeros({channels});
  state.running_var = BasicTensor<T>::Full({channels}, T(1));
  return state;
}

template <typename T>
BasicTensor<T> BatchNorm1d(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                           const BasicTensor<T>& beta, BatchNormState<T>& state, bool training) {
  Require(input.rank() == 2 || input.rank() == 3,
          "batchnorm1d input must be (C, L) or (B, C, L), got " + ShapeString(input.shape()));
  const std::size_t batch = input.rank() == 3 ? input.dim(0) : 1;
  const std::size_t channels = input.dim(input.rank() - 2);
  const std::size_t length = input.dim(input.rank() - 1);
  Require(gamma.size() == channels && beta.size() == channels &&
              state.running_mean.size() == channels && state.running_var.size() == channels,
          "batchnorm1d: parameter sizes do not match " + std::to_string(channels) + " channels");
  const double count = static_cast<double>(batch * length);
  AlignedVector<T> mean(channels);
  AlignedVector<T> inv_std(channels);
  const auto x = input.data();
  if (training) {
    auto rm = state.running_mean.data();
    auto rv = state.running_var.data();
    for (std::size_t c = 0; c < channels; ++c) {
      double sum = 0.0;
      double sum_sq = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const T* row = x.data() + (b * channels + c) * length;
        for (std::size_t t = 0; t < length; ++t) {
          sum += row[t];
          sum_sq += static_cast<double>(row[t]) * row[t];
        }
      }
      const double mu = sum / count;
      const double var = std::max(0.0, sum_sq / count - mu * mu);
      mean[c] = static_cast<T>(mu);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + state.epsilon));
      const double unbiased = count > 1 ? var * count / (count - 1) : var;
      rm[c] = static_cast<T>((1.0 - state.momentum) * rm[c] + state.momentum * mu);
      rv[c] = static_cast<T>((1.0 - state.momentum) * rv[c] + state.momentum * unbiased);
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = state.running_mean.data()[c];
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(state.running_var.data()[c]) + state.epsilon));
    }
  }
  auto out = BasicTensor<T>::Zeros(input.shape());
  auto y = out.data();
  const auto gd = gamma.data();
  const auto bd = beta.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (b * channels + c) * length;
      const T scale = gd[c] * inv_std[c];
      const T shift = bd[c] - mean[c] * scale;
      for (std::size_t t = 0; t < length; ++t) y[base + t] = x[base + t] * scale + shift;
    }
  }
  if (auto* tape = RecordingTape<T>({&input, &gamma, &beta})) {
    tape->Record("batchnorm1d", NodeIds<T>({&input, &gamma, &beta}), out,
                 [input, gamma, beta, out, mean = std::move(mean), inv_std = std::move(inv_std), batch,
                  channels, length, count, training]() mutable {
                   if (!out.has_grad()) return;
                   const auto g = out.grad();
                   const auto x = input.data();
                   auto xg = GradTarget(input);
                   auto gg = GradTarget(gamma);
                   auto bg = GradTarget(beta);
                   for (std::size_t c = 0; c < channels; ++c) {
                     double sum_g = 0.0;
                     double sum_gx = 0.0;
                     for (std::size_t b = 0; b < batch; ++b) {
                       const std::size_t base = (b * channels + c) * length;
                       for (std::size_t t = 0; t < length; ++t) {
                         const double xhat = (x[base + t] - mean[c]) * static_cast<double>(inv_std[c]);
                         sum_g += g[base + t];
                         sum_gx += g[base + t] * xhat;
                       }
                     }
                     if (!gg.empty()) gg[c] += static_cast<T>(sum_gx);
                     if (!bg.empty()) bg[c] += static_cast<T>(sum_g);
                     if (xg.empty()) continue;
                     const double scale = static_cast<double>(gamma.data()[c]) * inv_std[c];
                     const double mean_g = sum_g / count;
                     const double mean_gx = sum_gx / count;
                     for (std::size_t b = 0; b < batch; ++b) {
                       const std::size_t base = (b * channels + c) * length;
                       for (std::size_t t = 0; t < length; ++t) {
                         if (training) {
                           const double xhat = (x[base + t] - mean[c]) * static_cast<double>(inv_std[c]);
                           xg[base + t] += static_cast<T>(scale * (g[base + t] - mean_g - xhat * mean_gx));
                         } else {
                           xg[base + t] += static_cast<T>(scale * g[base + t]);
                         }
                       }
                     }
                   }
                 });
  }
  return out;
}

template <typename T>
BasicTensor<T> LayerNorm(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                         const BasicTensor<T>& beta, double epsilon) {
  const std::size_t width = input.shape().back();
  Require(gamma.size() == width && beta.size() == width,
          "layernorm: gamma/beta must have width " + std::to_string(width));
  const std::size_t rows = input.size() / width;
  auto out = BasicTensor<T>::Zeros(input.shape());
  AlignedVector<T> xhat(input.size());
  AlignedVector<T> inv_std(rows);
  const auto x = input.data();
  auto y = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = x.data() + r * width;
    double sum = 0.0;
    for (std::size_t i = 0; i < width; ++i) sum += row[i];
    const double mu = sum / width;
    double var = 0.0;
    for (std::size_t i = 0; i < width; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= width;
    const double is = 1.0 / std::sqrt(var + epsilon);
    inv_std[r] = static_cast<T>(is);
    for (std::size_t i = 0; i < width; ++i) {
      const T h = static_cast<T>((row[i] - mu) * is);
      xhat[r * width + i] = h;
      y[r * width + i] = h * gamma.data()[i] + beta.data()[i];
    }
  }
  if (auto* tape = RecordingTape<T>({&input, &gamma, &beta})) {
    tape->Record("layernorm", NodeIds<T>({&input, &gamma, &beta}), out,
                 [input, gamma, beta, out, xhat = std::move(xhat), inv_std = std::move(inv_std), rows,
                  width]() mutable {
                   if (!out.has_grad()) return;
                   const auto g = out.grad();
                   auto xg = GradTarget(input);
                   auto gg = GradTarget(gamma);
                   auto bg = GradTarget(beta);
                   const auto gd = gamma.data();
                   for (std::size_t r = 0; r < rows; ++r) {
                     const std::size_t base = r * width;
                     double sum_dh = 0.0;
                     double sum_dh_h = 0.0;
                     for (std::size_t i = 0; i < width; ++i) {
                       const double dh = static_cast<double>(g[base + i]) * gd[i];
                       sum_dh += dh;
                       sum_dh_h += dh * xhat[base + i];
                       if (!gg.empty()) gg[i] += g[base + i] * xhat[base + i];
                       if (!bg.empty()) bg[i] += g[base + i];
                     }
                     if (xg.empty()) continue;
                     const double mean_dh = sum_dh / width;
                     const double mean_dh_h = sum_dh_h / width;
                     for (std::size_t i = 0; i < width; ++i) {
                       const double dh = static_cast<double>(g[base + i]) * gd[i];
                       xg[base + i] += static_cast<T>(inv_std[r] * (dh - mean_dh - xhat[base + i] * mean_dh_h));
                     }
                   }
                 });
  }
  return out;
}

template <typename T>
BasicTensor<T> Softmax(const BasicTensor<T>& input, std::size_t axis) {
  const auto& shape = input.shape();
  Require(axis < shape.size(), "softmax: axis out of range for " + ShapeString(shape));
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t extent = shape[axis];
  auto out = BasicTensor<T>::Zeros(shape);
  const auto x = input.data();
  auto y = out.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * extent * inner + i;
      T max_value = x[base];
      for (std::size_t e = 1; e < extent; ++e) max_value = std::max(max_value, x[base + e * inner]);
      double total = 0.0;
      for (std::size_t e = 0; e < extent; ++e) {
        const T v = std::exp(x[base + e * inner] - max_value);
        y[base + e * inner] = v;
        total += v;
      }
      for (std::size_t e = 0; e < extent; ++e) y[base + e * inner] = static_cast<T>(y[base + e * inner] / total);
    }
  }
  if (auto* tape = RecordingTape<T>({&input})) {
    tape->Record("softmax", NodeIds<T>({&input}), out, [input, out, outer, inner, extent]() mutable {
      if (!out.has_grad()) return;
      const auto g = out.grad();
      const auto y = out.data();
      auto xg = GradTarget(input);
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t base = o * extent * inner + i;
          double dot = 0.0;
          for (std::size_t e = 0; e < extent; ++e) dot += static_cast<double>(g[base + e * inner]) * y[base + e * inner];
          for (std::size_t e = 0; e < extent; ++e) {
            const std::size_t idx = base + e * inner;
            xg[idx] += static_cast<T>(y[idx] * (g[idx] - dot));
          }
        }
      }
    });
  }
  return out;
}

#define INSTANTIATE(T)                                                                              \
  template struct BatchNormState<T>;                                                                \
  template BasicTensor<T> BatchNorm1d(const BasicTensor<T>&, const BasicTensor<T>&,                 \
                                      const BasicTensor<T>&, BatchNormState<T>&, bool);             \
  template BasicTensor<T> LayerNorm(const BasicTensor<T>&, const BasicTensor<T>&,                   \
                                    const BasicTensor<T>&, double);                                 \
  template BasicTensor<T> Softmax(const BasicTensor<T>&, std::size_t);
FLUSENSE_INSTANTIATE_FLOAT_DOUBLE(INSTANTIATE)
#undef INSTANTIATE

}  // namespace flusense::tensor
