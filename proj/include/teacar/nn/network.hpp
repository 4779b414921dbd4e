#pragma once

// Scalar-generic CNN engine: float for training and inference, double for
// gradient checking. Convolutions are im2col + GEMM.

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "teacar/error.hpp"
#include "teacar/nn/arch.hpp"
#include "teacar/nn/tensor.hpp"

namespace teacar::nn {

enum class Preprocessing : std::uint8_t { byte_over_255 = 0 };

template <class T>
struct LayerParams {
  std::vector<T> kernel;
  std::vector<T> bias;

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

/// Parameters for every layer of `arch` (empty entries for parameter-free layers).
template <class T>
struct BasicWeights {
  ModelArch arch;
  Preprocessing preprocessing = Preprocessing::byte_over_255;
  std::vector<LayerParams<T>> layers;

  static BasicWeights zeros(const ModelArch& a) {
    output_shapes(a);  // validates the chain
    BasicWeights w;
    w.arch = a;
    w.layers.resize(a.layers.size());
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
      w.layers[i].kernel.assign(static_cast<std::size_t>(a.layers[i].kernel_size()), T{});
      w.layers[i].bias.assign(static_cast<std::size_t>(a.layers[i].bias_size()), T{});
    }
    return w;
  }

  std::int64_t scalar_count() const {
    std::int64_t n = 0;
    for (const auto& l : layers) n += static_cast<std::int64_t>(l.kernel.size() + l.bias.size());
    return n;
  }

  void set_zero() {
    for (auto& l : layers) {
      std::fill(l.kernel.begin(), l.kernel.end(), T{});
      std::fill(l.bias.begin(), l.bias.end(), T{});
    }
  }

  /// Visits every scalar as (layer, is_bias, index, value&).
  template <class F>
  void for_each_param(F&& f) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      for (std::size_t j = 0; j < layers[i].kernel.size(); ++j) f(i, false, j, layers[i].kernel[j]);
      for (std::size_t j = 0; j < layers[i].bias.size(); ++j) f(i, true, j, layers[i].bias[j]);
    }
  }

  /// Throws ValidationError if parameter sizes do not match the arch.
  void check() const {
    if (layers.size() != arch.layers.size()) {
      throw ValidationError("weights: layer count does not match architecture");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (static_cast<std::int64_t>(layers[i].kernel.size()) != arch.layers[i].kernel_size() ||
          static_cast<std::int64_t>(layers[i].bias.size()) != arch.layers[i].bias_size()) {
        throw ValidationError("weights: layer " + std::to_string(i) + " has wrong parameter size");
      }
    }
  }

  friend bool operator==(const BasicWeights& a, const BasicWeights& b) {
    return a.arch.name == b.arch.name && a.preprocessing == b.preprocessing && a.layers == b.layers;
  }
};

using Weights = BasicWeights<float>;

/// Uniform Kaiming (fan-in) initialization: U(-sqrt(6/fan_in), +sqrt(6/fan_in)), zero biases.
template <class T>
BasicWeights<T> init_weights(const ModelArch& arch, std::uint64_t seed) {
  auto w = BasicWeights<T>::zeros(arch);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    if (!arch.layers[i].has_params()) continue;
    const double bound = std::sqrt(6.0 / static_cast<double>(arch.layers[i].fan_in()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : w.layers[i].kernel) v = static_cast<T>(dist(rng));
  }
  return w;
}

/// HWC uint8 image -> CHW scalars scaled by 1/255.
template <class T>
std::vector<T> preprocess(std::span<const std::uint8_t> hwc, const Shape3& shape) {
  const std::size_t plane = static_cast<std::size_t>(shape.height) * shape.width;
  if (hwc.size() != plane * shape.channels) {
    throw ValidationError("preprocess: image has " + std::to_string(hwc.size()) +
                          " bytes, expected " + std::to_string(plane * shape.channels));
  }
  std::vector<T> chw(hwc.size());
  constexpr T scale = T(1) / T(255);
  for (std::size_t p = 0; p < plane; ++p) {
    for (int c = 0; c < shape.channels; ++c) {
      chw[c * plane + p] = static_cast<T>(hwc[p * shape.channels + c]) * scale;
    }
  }
  return chw;
}

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <class T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <class T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

// col is (C*k*k) x (Ho*Wo), row index c*k*k + ki*k + kj.
template <class T>
void im2col(const T* in, int channels, int height, int width, int k, int stride, T* col) {
  const int ho = conv_out_extent(height, k, stride);
  const int wo = conv_out_extent(width, k, stride);
  for (int c = 0; c < channels; ++c) {
    const T* plane = in + static_cast<std::size_t>(c) * height * width;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        T* row = col + (static_cast<std::size_t>(c * k + ki) * k + kj) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const T* src = plane + static_cast<std::size_t>(oy * stride + ki) * width + kj;
          T* dst = row + static_cast<std::size_t>(oy) * wo;
          if (stride == 1) {
            std::copy(src, src + wo, dst);
          } else {
            for (int ox = 0; ox < wo; ++ox) dst[ox] = src[ox * stride];
          }
        }
      }
    }
  }
}

// Accumulates col back into an image-shaped gradient buffer.
template <class T>
void col2im_add(const T* col, int channels, int height, int width, int k, int stride, T* out) {
  const int ho = conv_out_extent(height, k, stride);
  const int wo = conv_out_extent(width, k, stride);
  for (int c = 0; c < channels; ++c) {
    T* plane = out + static_cast<std::size_t>(c) * height * width;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const T* row = col + (static_cast<std::size_t>(c * k + ki) * k + kj) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          T* dst = plane + static_cast<std::size_t>(oy * stride + ki) * width + kj;
          const T* src = row + static_cast<std::size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) dst[ox * stride] += src[ox];
        }
      }
    }
  }
}

template <class T>
std::vector<T>& scratch() {
  thread_local std::vector<T> buffer;
  return buffer;
}

template <class T>
void conv_forward(const T* in, const Shape& in_shape, const ConvSpec& spec,
                  const LayerParams<T>& p, T* out) {
  const int ho = conv_out_extent(in_shape[1], spec.kernel, spec.stride);
  const int wo = conv_out_extent(in_shape[2], spec.kernel, spec.stride);
  const Eigen::Index rows = static_cast<Eigen::Index>(spec.in_ch) * spec.kernel * spec.kernel;
  const Eigen::Index cols = static_cast<Eigen::Index>(ho) * wo;
  auto& col = scratch<T>();
  col.resize(static_cast<std::size_t>(rows * cols));
  im2col(in, in_shape[0], in_shape[1], in_shape[2], spec.kernel, spec.stride, col.data());
  ConstMatMap<T> kernel(p.kernel.data(), spec.out_ch, rows);
  ConstMatMap<T> cm(col.data(), rows, cols);
  MatMap<T> om(out, spec.out_ch, cols);
  om.noalias() = kernel * cm;
  om.colwise() += ConstVecMap<T>(p.bias.data(), spec.out_ch);
}

template <class T>
void conv_backward(const T* in, const Shape& in_shape, const ConvSpec& spec,
                   const LayerParams<T>& p, const T* grad_out, LayerParams<T>& grad_p,
                   T* grad_in) {
  const int ho = conv_out_extent(in_shape[1], spec.kernel, spec.stride);
  const int wo = conv_out_extent(in_shape[2], spec.kernel, spec.stride);
  const Eigen::Index rows = static_cast<Eigen::Index>(spec.in_ch) * spec.kernel * spec.kernel;
  const Eigen::Index cols = static_cast<Eigen::Index>(ho) * wo;
  auto& col = scratch<T>();
  col.resize(static_cast<std::size_t>(rows * cols));
  im2col(in, in_shape[0], in_shape[1], in_shape[2], spec.kernel, spec.stride, col.data());

  ConstMatMap<T> dy(grad_out, spec.out_ch, cols);
  ConstMatMap<T> cm(col.data(), rows, cols);
  MatMap<T>(grad_p.kernel.data(), spec.out_ch, rows).noalias() += dy * cm.transpose();
  VecMap<T>(grad_p.bias.data(), spec.out_ch) += dy.rowwise().sum();

  if (grad_in != nullptr) {
    // Reuse the column buffer for d(col).
    MatMap<T> dcol(col.data(), rows, cols);
    dcol.noalias() = ConstMatMap<T>(p.kernel.data(), spec.out_ch, rows).transpose() * dy;
    std::fill(grad_in, grad_in + static_cast<std::size_t>(in_shape[0]) * in_shape[1] * in_shape[2],
              T{});
    col2im_add(col.data(), in_shape[0], in_shape[1], in_shape[2], spec.kernel, spec.stride,
               grad_in);
  }
}

inline std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

}  // namespace detail

/// Standard valid cross-correlation. input C x H x W, kernel O x C x k x k, bias O.
template <class T>
BasicTensor<T> conv2d_valid(const BasicTensor<T>& input, const BasicTensor<T>& kernel,
                            std::span<const T> bias, int stride) {
  if (input.rank() != 3 || kernel.rank() != 4 || kernel.shape[2] != kernel.shape[3]) {
    throw ValidationError("conv2d_valid: expected C x H x W input and O x C x k x k kernel");
  }
  const int c = input.shape[0], h = input.shape[1], w = input.shape[2];
  const int o = kernel.shape[0], k = kernel.shape[2];
  if (kernel.shape[1] != c) {
    throw ValidationError("conv2d_valid: kernel input channels do not match input");
  }
  if (static_cast<int>(bias.size()) != o) {
    throw ValidationError("conv2d_valid: bias length must equal output channels");
  }
  if (stride <= 0 || h < k || w < k) {
    throw ValidationError("conv2d_valid: kernel larger than input or bad stride");
  }
  const ConvSpec spec{c, o, k, stride};
  LayerParams<T> p{kernel.data, {bias.begin(), bias.end()}};
  BasicTensor<T> out({o, conv_out_extent(h, k, stride), conv_out_extent(w, k, stride)});
  detail::conv_forward(input.data.data(), input.shape, spec, p, out.data.data());
  return out;
}

/// Per-layer activations of one forward pass; values[0] is the input and
/// values[i + 1] the output of layer i.
template <class T>
struct Activations {
  std::vector<std::vector<T>> values;
  std::vector<Shape> shapes;
};

/// Single-sample forward pass. Returns the scalar network output.
template <class T>
T forward(const BasicWeights<T>& w, std::span<const T> input, Activations<T>* keep = nullptr) {
  const ModelArch& arch = w.arch;
  if (static_cast<std::int64_t>(input.size()) != arch.input_size()) {
    throw ValidationError("forward: input has " + std::to_string(input.size()) +
                          " values, expected " + std::to_string(arch.input_size()));
  }
  const std::vector<Shape> trace = output_shapes(arch);
  if (trace.empty() || detail::shape_size(trace.back()) != 1) {
    throw ValidationError("forward: architecture must end in a single output");
  }
  Activations<T> local;
  Activations<T>& acts = keep != nullptr ? *keep : local;
  acts.values.resize(arch.layers.size() + 1);
  acts.shapes.resize(arch.layers.size() + 1);
  acts.values[0].assign(input.begin(), input.end());
  acts.shapes[0] = {arch.input.channels, arch.input.height, arch.input.width};

  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& layer = arch.layers[i];
    const std::vector<T>& x = acts.values[i];
    std::vector<T>& y = acts.values[i + 1];
    acts.shapes[i + 1] = trace[i];
    y.resize(detail::shape_size(trace[i]));
    switch (layer.kind) {
      case LayerKind::conv:
        detail::conv_forward(x.data(), acts.shapes[i], layer.conv, w.layers[i], y.data());
        break;
      case LayerKind::fc: {
        detail::VecMap<T> ym(y.data(), layer.fc.out_features);
        ym.noalias() = detail::ConstMatMap<T>(w.layers[i].kernel.data(), layer.fc.out_features,
                                              layer.fc.in_features) *
                       detail::ConstVecMap<T>(x.data(), layer.fc.in_features);
        ym += detail::ConstVecMap<T>(w.layers[i].bias.data(), layer.fc.out_features);
        break;
      }
      case LayerKind::relu:
        for (std::size_t j = 0; j < y.size(); ++j) y[j] = x[j] > T{} ? x[j] : T{};
        break;
      case LayerKind::tanh:
        for (std::size_t j = 0; j < y.size(); ++j) y[j] = std::tanh(x[j]);
        break;
      case LayerKind::flatten:
        std::copy(x.begin(), x.end(), y.begin());
        break;
    }
  }
  return acts.values.back()[0];
}

/// Accumulates d(output)/d(params) * grad_output into `grads`.
template <class T>
void backward(const BasicWeights<T>& w, const Activations<T>& acts, T grad_output,
              BasicWeights<T>& grads) {
  const ModelArch& arch = w.arch;
  std::vector<T> dy{grad_output};
  std::vector<T> dx;
  for (std::size_t n = arch.layers.size(); n-- > 0;) {
    const LayerSpec& layer = arch.layers[n];
    const std::vector<T>& x = acts.values[n];
    const std::vector<T>& y = acts.values[n + 1];
    // The input gradient of the first parametrized layer is never needed.
    bool need_dx = false;
    for (std::size_t j = 0; j < n; ++j) need_dx = need_dx || arch.layers[j].has_params();
    dx.assign(x.size(), T{});
    switch (layer.kind) {
      case LayerKind::conv:
        detail::conv_backward(x.data(), acts.shapes[n], layer.conv, w.layers[n], dy.data(),
                              grads.layers[n], need_dx ? dx.data() : nullptr);
        break;
      case LayerKind::fc: {
        const int out = layer.fc.out_features, in = layer.fc.in_features;
        detail::ConstVecMap<T> dym(dy.data(), out);
        detail::MatMap<T>(grads.layers[n].kernel.data(), out, in).noalias() +=
            dym * detail::ConstVecMap<T>(x.data(), in).transpose();
        detail::VecMap<T>(grads.layers[n].bias.data(), out) += dym;
        if (need_dx) {
          detail::VecMap<T>(dx.data(), in).noalias() =
              detail::ConstMatMap<T>(w.layers[n].kernel.data(), out, in).transpose() * dym;
        }
        break;
      }
      case LayerKind::relu:
        for (std::size_t j = 0; j < dx.size(); ++j) dx[j] = y[j] > T{} ? dy[j] : T{};
        break;
      case LayerKind::tanh:
        for (std::size_t j = 0; j < dx.size(); ++j) dx[j] = dy[j] * (T(1) - y[j] * y[j]);
        break;
      case LayerKind::flatten:
        dx = dy;
        break;
    }
    if (!need_dx) {
      break;
    }
    std::swap(dx, dy);
  }
}

/// Mean squared error over a batch laid out as N consecutive inputs.
template <class T>
T batch_loss(const BasicWeights<T>& w, std::span<const T> inputs, std::span<const T> labels) {
  const std::size_t in = static_cast<std::size_t>(w.arch.input_size());
  if (labels.empty() || inputs.size() != labels.size() * in) {
    throw ValidationError("batch_loss: inputs and labels disagree in length");
  }
  T sum{};
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const T e = forward<T>(w, inputs.subspan(n * in, in)) - labels[n];
    sum += e * e;
  }
  return sum / static_cast<T>(labels.size());
}

/// MSE over the batch; writes d(loss)/d(params) into `grads` (overwritten).
template <class T>
T batch_loss_and_grad(const BasicWeights<T>& w, std::span<const T> inputs,
                      std::span<const T> labels, BasicWeights<T>& grads) {
  const std::size_t in = static_cast<std::size_t>(w.arch.input_size());
  if (labels.empty() || inputs.size() != labels.size() * in) {
    throw ValidationError("batch_loss_and_grad: inputs and labels disagree in length");
  }
  if (grads.layers.size() != w.layers.size()) {
    grads = BasicWeights<T>::zeros(w.arch);
  } else {
    grads.set_zero();
  }
  const T n = static_cast<T>(labels.size());
  Activations<T> acts;
  T sum{};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const T e = forward<T>(w, inputs.subspan(i * in, in), &acts) - labels[i];
    sum += e * e;
    backward<T>(w, acts, T(2) * e / n, grads);
  }
  return sum / n;
}

}  // namespace teacar::nn
