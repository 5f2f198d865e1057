#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace convctc {

using Shape = std::vector<std::size_t>;

/// Thrown whenever tensor extents do not satisfy an operation's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string shape_string(const Shape& shape);

inline std::size_t shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

// Dense row-major array, last axis fastest. A default-constructed tensor is
// the null tensor: rank 0 and no storage.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
    check_extents();
    data_.assign(shape_product(shape_), fill);
  }

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents();
    if (data_.size() != shape_product(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* raw() { return data_.data(); }
  const T* raw() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Row-major element access; rank must match the number of indices.
  template <typename... Idx>
  T& at(Idx... idx) {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }
  template <typename... Idx>
  const T& at(Idx... idx) const {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }

  /// Same storage, new extents with identical element count.
  Tensor reshaped(Shape shape) const& {
    Tensor out(*this);
    out.reshape(std::move(shape));
    return out;
  }
  Tensor reshaped(Shape shape) && {
    reshape(std::move(shape));
    return std::move(*this);
  }

  void reshape(Shape shape) {
    if (shape_product(shape) != data_.size()) {
      throw ShapeError("cannot reshape " + shape_string(shape_) + " to " +
                       shape_string(shape));
    }
    shape_ = std::move(shape);
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(),
                   [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape_, std::move(out));
  }

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  void check_extents() const {
    for (std::size_t e : shape_) {
      if (e == 0) {
        throw ShapeError("tensor extents must be positive, got " +
                         shape_string(shape_));
      }
    }
  }

  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != shape_.size()) {
      throw ShapeError("index rank " + std::to_string(idx.size()) +
                       " does not match tensor rank " +
                       std::to_string(shape_.size()));
    }
    std::size_t off = 0;
    std::size_t axis = 0;
    for (std::size_t i : idx) {
      off = off * shape_[axis++] + i;
    }
    return off;
  }

  Shape shape_;
  std::vector<T> data_;
};

// ---------------------------------------------------------------------------
// Arithmetic

/// C[m x n] += A[m x k] * B[k x n], all row-major. Every C(i, j) accumulates
/// its k terms in ascending order, so results do not depend on blocking.
template <typename T>
void gemm_accumulate(std::size_t m, std::size_t n, std::size_t k, const T* a,
                     const T* b, T* c);

/// Out-of-place transpose of a row-major [rows x cols] matrix.
template <typename T>
void transpose_into(std::size_t rows, std::size_t cols, const T* src, T* dst);

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

template <typename T, typename F>
Tensor<T> map_elementwise(const Tensor<T>& x, F&& f) {
  Tensor<T> out(x);
  for (auto& v : out.data()) v = f(v);
  return out;
}

/// log(sum(exp(x))) with max shift; exact -inf when every entry is -inf.
template <typename T>
T reduce_logsumexp(std::span<const T> x) {
  if (x.empty()) {
    throw std::invalid_argument("reduce_logsumexp of an empty range");
  }
  const T hi = *std::max_element(x.begin(), x.end());
  if (hi == -std::numeric_limits<T>::infinity()) return hi;
  T acc = 0;
  for (T v : x) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

template <typename T>
T reduce_logsumexp(std::initializer_list<T> x) {
  return reduce_logsumexp(std::span<const T>(x.begin(), x.size()));
}

/// Copy of the first `frames` steps along the last axis.
template <typename T>
Tensor<T> take_frames(const Tensor<T>& x, std::size_t frames);

/// Zero every step at or beyond `frames` along the last axis, in place.
template <typename T>
void zero_frames_from(Tensor<T>& x, std::size_t frames);

template <typename T>
void add_inplace(Tensor<T>& acc, const Tensor<T>& x);

template <typename T>
void scale_inplace(Tensor<T>& x, T factor);

template <typename T>
bool all_finite(const Tensor<T>& x) {
  return std::all_of(x.data().begin(), x.data().end(),
                     [](T v) { return std::isfinite(v); });
}

}  // namespace convctc
