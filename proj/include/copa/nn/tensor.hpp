#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "copa/errors.hpp"

namespace copa::nn {

// Dense row-major tensor. Shape is kept as a plain vector; rank is at most
// 3 in this codebase ([n] vectors, [out,in] matrices, [C,H,W] images).
template <class T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(numel(shape), T(0));
  }
  Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel(shape)) throw ShapeError("tensor: data does not match shape");
  }

  static std::size_t numel(const std::vector<int>& s) {
    std::size_t n = 1;
    for (const int d : s) n *= static_cast<std::size_t>(d);
    return n;
  }

  std::size_t size() const { return data.size(); }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.reserve(data.size());
    for (const T v : data) out.data.push_back(static_cast<U>(v));
    return out;
  }
};

template <class T>
Tensor<T> scalar_tensor(T v) {
  return Tensor<T>({1}, {v});
}

}  // namespace copa::nn
