#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sentinet/errors.hpp"

namespace sentinet {

// Dense N-dimensional array, row-major. The float instantiation is the
// carrier for all activations, weights and gradients; the double one backs
// the gradient-check path.
template <class T>
struct TensorT {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  TensorT() = default;

  explicit TensorT(std::vector<std::size_t> s)
      : shape(std::move(s)), data(numel_of(shape), T(0)) {}

  TensorT(std::vector<std::size_t> s, std::vector<T> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel_of(shape)) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape product " +
                       std::to_string(numel_of(shape)));
    }
  }

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) {
      if (d == 0) throw ShapeError("tensor dimension must be positive");
      n *= d;
    }
    return n;
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  std::size_t dim(std::size_t i) const {
    if (i >= shape.size())
      throw ShapeError("axis " + std::to_string(i) + " out of range for rank " +
                       std::to_string(shape.size()) + " tensor");
    return shape[i];
  }

  T& at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  const T& at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }

  T& at2(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  const T& at2(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

  // Reinterprets the layout without touching data.
  void reshape(std::vector<std::size_t> s) {
    if (numel_of(s) != data.size())
      throw ShapeError("reshape to incompatible element count");
    shape = std::move(s);
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

template <class T>
std::string shape_str(const TensorT<T>& t) {
  std::string s = "[";
  for (std::size_t i = 0; i < t.shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(t.shape[i]);
  }
  return s + "]";
}

// Converts between scalar types (float deployment path <-> double check path).
template <class To, class From>
TensorT<To> tensor_cast(const TensorT<From>& t) {
  TensorT<To> out(t.shape);
  for (std::size_t i = 0; i < t.data.size(); ++i) out.data[i] = static_cast<To>(t.data[i]);
  return out;
}

}  // namespace sentinet
