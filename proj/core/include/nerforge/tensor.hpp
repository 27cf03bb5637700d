#pragma once

#include <array>
#include <cassert>
#include <cstdint>
#include <string>
#include <vector>

namespace nerforge::ad {

// Shape of a dense row-major array, rank 0 (scalar) through 3.
struct Shape {
  int rank = 0;
  std::array<int, 3> dim{1, 1, 1};

  static Shape scalar() { return Shape{}; }
  static Shape vec(int n) { return Shape{1, {n, 1, 1}}; }
  static Shape mat(int r, int c) { return Shape{2, {r, c, 1}}; }
  static Shape cube(int a, int b, int c) { return Shape{3, {a, b, c}}; }

  int64_t size() const {
    return static_cast<int64_t>(dim[0]) * dim[1] * dim[2];
  }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    std::string s = "[";
    for (int i = 0; i < rank; ++i) {
      if (i) s += "x";
      s += std::to_string(dim[i]);
    }
    return s + "]";
  }
};

template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(s), v(static_cast<size_t>(s.size()), T(0)) {}

  T& operator[](int64_t i) { return v[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return v[static_cast<size_t>(i)]; }

  T& at(int i, int j) {
    assert(shape.rank == 2);
    return v[static_cast<size_t>(i) * static_cast<size_t>(shape.dim[1]) + static_cast<size_t>(j)];
  }
  const T& at(int i, int j) const {
    assert(shape.rank == 2);
    return v[static_cast<size_t>(i) * static_cast<size_t>(shape.dim[1]) + static_cast<size_t>(j)];
  }

  void fill(T x) { std::fill(v.begin(), v.end(), x); }
  void zero() { fill(T(0)); }
};

// A named trainable tensor with its persistent gradient accumulator.
// Each parameter appears exactly once in a model's parameter list.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  Param(std::string n, Shape s) : name(std::move(n)), value(s), grad(s) {}

  void zero_grad() { grad.zero(); }
};

}  // namespace nerforge::ad
