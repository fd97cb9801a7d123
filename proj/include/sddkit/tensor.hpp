#pragma once

#include <cstddef>
#include <numeric>
#include <vector>

#include "sddkit/common.hpp"

namespace sddkit {

// Dense row-major tensor. Image tensors use NHWC layout; convolution weights
// use [kh, kw, cin, cout].
template <typename T>
struct TensorT {
  std::vector<int> shape;
  std::vector<T> v;

  TensorT() = default;
  explicit TensorT(std::vector<int> s) : shape(std::move(s)), v(count(shape)) {}

  static size_t count(const std::vector<int>& s) {
    size_t n = 1;
    for (int d : s) {
      require(d >= 0, "tensor: negative dimension ", d);
      n *= static_cast<size_t>(d);
    }
    return n;
  }

  static TensorT zeros(std::vector<int> s) { return TensorT(std::move(s)); }

  static TensorT full(std::vector<int> s, T value) {
    TensorT t(std::move(s));
    std::fill(t.v.begin(), t.v.end(), value);
    return t;
  }

  size_t size() const { return v.size(); }
  T* data() { return v.data(); }
  const T* data() const { return v.data(); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }

  T& operator[](size_t i) { return v[i]; }
  const T& operator[](size_t i) const { return v[i]; }

  // NHWC addressing
  size_t idx4(int n, int y, int x, int c) const {
    return ((static_cast<size_t>(n) * shape[1] + y) * shape[2] + x) * shape[3] + c;
  }
  T& at4(int n, int y, int x, int c) { return v[idx4(n, y, x, c)]; }
  const T& at4(int n, int y, int x, int c) const { return v[idx4(n, y, x, c)]; }

  void zero() { std::fill(v.begin(), v.end(), T(0)); }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out(shape);
    for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
    return out;
  }
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

template <typename T>
std::string shape_str(const TensorT<T>& t) {
  std::string s = "[";
  for (size_t i = 0; i < t.shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(t.shape[i]);
  }
  return s + "]";
}

}  // namespace sddkit
