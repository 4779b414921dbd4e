#pragma once

// Brute-force reference implementations used to cross-check the library.

#include <cmath>
#include <cstdint>
#include <algorithm>
#include <random>
#include <span>
#include <vector>

#include "teacar/nn/network.hpp"

namespace oracle {

// Nested-loop forward pass in double, reading the same weight layout
// (conv kernel O x C x k x k, fc kernel out x in).
template <class T>
double naive_forward(const teacar::nn::BasicWeights<T>& w, const std::vector<double>& input) {
  using teacar::nn::LayerKind;
  int c = w.arch.input.channels, h = w.arch.input.height, wd = w.arch.input.width;
  std::vector<double> x = input;
  for (std::size_t li = 0; li < w.arch.layers.size(); ++li) {
    const auto& layer = w.arch.layers[li];
    const auto& p = w.layers[li];
    if (layer.kind == LayerKind::conv) {
      const int k = layer.conv.kernel, s = layer.conv.stride, o = layer.conv.out_ch;
      const int ho = (h - k) / s + 1, wo = (wd - k) / s + 1;
      std::vector<double> y(static_cast<std::size_t>(o) * ho * wo);
      for (int oc = 0; oc < o; ++oc) {
        for (int oy = 0; oy < ho; ++oy) {
          for (int ox = 0; ox < wo; ++ox) {
            double acc = p.bias[oc];
            for (int ic = 0; ic < c; ++ic) {
              for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                  const double kv = p.kernel[((static_cast<std::size_t>(oc) * c + ic) * k + ky) * k + kx];
                  const double xv = x[(static_cast<std::size_t>(ic) * h + oy * s + ky) * wd + ox * s + kx];
                  acc += kv * xv;
                }
              }
            }
            y[(static_cast<std::size_t>(oc) * ho + oy) * wo + ox] = acc;
          }
        }
      }
      x = std::move(y);
      c = o;
      h = ho;
      wd = wo;
    } else if (layer.kind == LayerKind::fc) {
      const int in = layer.fc.in_features, out = layer.fc.out_features;
      std::vector<double> y(out);
      for (int r = 0; r < out; ++r) {
        double acc = p.bias[r];
        for (int j = 0; j < in; ++j) acc += static_cast<double>(p.kernel[static_cast<std::size_t>(r) * in + j]) * x[j];
        y[r] = acc;
      }
      x = std::move(y);
    } else if (layer.kind == LayerKind::relu) {
      for (double& v : x) v = v > 0.0 ? v : 0.0;
    } else if (layer.kind == LayerKind::tanh) {
      for (double& v : x) v = std::tanh(v);
    }
  }
  return x.at(0);
}

// One 3x3 conv with two output channels, then a single fc unit and tanh.
inline teacar::nn::ModelArch tiny_arch() {
  using teacar::nn::LayerSpec;
  teacar::nn::ModelArch a;
  a.name = "tiny";
  a.input = {3, 6, 7};
  a.layers = {LayerSpec::make_conv(3, 2, 3, 1), LayerSpec::make_flatten(),
              LayerSpec::make_fc(2 * 4 * 5, 1), LayerSpec::make_tanh()};
  return a;
}

struct GradientCheck {
  double max_param_rel_error = 0.0;  // d(output)/d(param), worst single parameter
  double loss_rel_error = 0.0;       // d(batch MSE)/d(params), vector norm
};

// Analytic gradients against central differences with step eps, in double.
// Per-parameter errors use the network output; the batch loss, whose
// per-sample terms can cancel to near zero, is compared as a whole vector.
inline GradientCheck gradient_check(std::uint64_t seed, double eps = 1e-3) {
  using namespace teacar::nn;
  const ModelArch arch = tiny_arch();
  auto w = init_weights<double>(arch, seed);
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  // Non-zero biases so every term is exercised.
  w.for_each_param([&](std::size_t, bool is_bias, std::size_t, double& v) {
    if (is_bias) v = 0.1 * u(rng);
  });
  const std::size_t n = 3, in = static_cast<std::size_t>(arch.input_size());
  std::vector<double> inputs(n * in);
  for (double& v : inputs) v = u(rng);
  std::vector<double> labels(n);
  for (double& v : labels) v = 0.5 * u(rng);

  auto numeric = [&](double& param, auto&& f) {
    const double saved = param;
    param = saved + eps;
    const double up = f();
    param = saved - eps;
    const double down = f();
    param = saved;
    return (up - down) / (2.0 * eps);
  };
  auto each_param = [&](auto&& visit) {
    for (std::size_t li = 0; li < w.layers.size(); ++li) {
      for (std::size_t j = 0; j < w.layers[li].kernel.size(); ++j) visit(li, false, j);
      for (std::size_t j = 0; j < w.layers[li].bias.size(); ++j) visit(li, true, j);
    }
  };
  auto ref = [](auto& weights, std::size_t li, bool bias, std::size_t j) -> auto& {
    return bias ? weights.layers[li].bias[j] : weights.layers[li].kernel[j];
  };

  GradientCheck result;
  for (std::size_t s = 0; s < n; ++s) {
    const std::span<const double> x(inputs.data() + s * in, in);
    Activations<double> acts;
    forward<double>(w, x, &acts);
    auto g = BasicWeights<double>::zeros(arch);
    backward<double>(w, acts, 1.0, g);
    each_param([&](std::size_t li, bool bias, std::size_t j) {
      const double num = numeric(ref(w, li, bias, j), [&] { return forward<double>(w, x); });
      const double ana = ref(g, li, bias, j);
      const double denom = std::max({std::abs(num), std::abs(ana), 1e-12});
      result.max_param_rel_error = std::max(result.max_param_rel_error, std::abs(num - ana) / denom);
    });
  }

  BasicWeights<double> grads;
  batch_loss_and_grad<double>(w, inputs, labels, grads);
  double diff2 = 0.0, ana2 = 0.0, num2 = 0.0;
  each_param([&](std::size_t li, bool bias, std::size_t j) {
    const double num =
        numeric(ref(w, li, bias, j), [&] { return batch_loss<double>(w, inputs, labels); });
    const double ana = ref(grads, li, bias, j);
    diff2 += (num - ana) * (num - ana);
    ana2 += ana * ana;
    num2 += num * num;
  });
  result.loss_rel_error = std::sqrt(diff2) / std::max(std::sqrt(std::max(ana2, num2)), 1e-12);
  return result;
}

}  // namespace oracle
