#pragma once

#include <cmath>
#include <string_view>

#include "teacar/nn/network.hpp"

namespace teacar::nn {

enum class OptimizerKind { sgd, adam };

OptimizerKind optimizer_from_string(std::string_view name);

/// Plain SGD or Adam (beta1 0.9, beta2 0.999, eps 1e-8) over BasicWeights.
template <class T>
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate) : kind_(kind), lr_(learning_rate) {}

  void step(BasicWeights<T>& w, const BasicWeights<T>& grads) {
    if (kind_ == OptimizerKind::adam && m_.layers.size() != w.layers.size()) {
      m_ = BasicWeights<T>::zeros(w.arch);
      v_ = BasicWeights<T>::zeros(w.arch);
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < w.layers.size(); ++i) {
      update(w.layers[i].kernel, grads.layers[i].kernel, i, false, bc1, bc2);
      update(w.layers[i].bias, grads.layers[i].bias, i, true, bc1, bc2);
    }
  }

  double learning_rate() const { return lr_; }
  long steps() const { return t_; }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  void update(std::vector<T>& p, const std::vector<T>& g, std::size_t layer, bool bias, double bc1,
              double bc2) {
    if (kind_ == OptimizerKind::sgd) {
      const T lr = static_cast<T>(lr_);
      for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * g[j];
      return;
    }
    auto& m = bias ? m_.layers[layer].bias : m_.layers[layer].kernel;
    auto& v = bias ? v_.layers[layer].bias : v_.layers[layer].kernel;
    const T b1 = static_cast<T>(kBeta1), b2 = static_cast<T>(kBeta2);
    const T step = static_cast<T>(lr_ * std::sqrt(bc2) / bc1);
    const T eps = static_cast<T>(kEps * std::sqrt(bc2));
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      p[j] -= step * m[j] / (std::sqrt(v[j]) + eps);
    }
  }

  OptimizerKind kind_;
  double lr_;
  long t_ = 0;
  BasicWeights<T> m_;
  BasicWeights<T> v_;
};

}  // namespace teacar::nn
