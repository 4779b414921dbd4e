#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <vector>

#include "teacar/error.hpp"

namespace teacar::nn {

/// Dense row-major tensor.
template <class T>
struct BasicTensor {
  std::vector<int> shape;
  std::vector<T> data;

  BasicTensor() = default;
  explicit BasicTensor(std::vector<int> s, T fill = T{}) : shape(std::move(s)) {
    data.assign(element_count(shape), fill);
  }
  BasicTensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != element_count(shape)) {
      throw ValidationError("tensor data length does not match its shape");
    }
  }

  static std::size_t element_count(const std::vector<int>& s) {
    for (int d : s) {
      if (d <= 0) throw ValidationError("tensor dimensions must be positive");
    }
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t size() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;
};

using Tensor = BasicTensor<float>;

}  // namespace teacar::nn
