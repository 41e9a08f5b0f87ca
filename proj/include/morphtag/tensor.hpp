#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace morphtag {

// Error taxonomy shared by all modules.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

// Dense row-major array. Rank >= 2 tensors are viewed as matrices of
// dim(0) rows by product(rest) columns; rank-1 tensors as a single row.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (element_count(shape_) != data_.size()) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
    }
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<T> values) {
    return Tensor({rows, cols}, std::vector<T>(values));
  }

  static Tensor vector(std::initializer_list<T> values) {
    return Tensor({values.size()}, std::vector<T>(values));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  std::size_t rows() const {
    if (shape_.empty()) return 0;
    return shape_.size() == 1 ? 1 : shape_[0];
  }
  std::size_t cols() const {
    const std::size_t r = rows();
    return r == 0 ? 0 : data_.size() / r;
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(T(0)); }

  void reshape(Shape shape) {
    if (element_count(shape) != data_.size()) {
      throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    shape_ = std::move(shape);
  }

  // Resize and zero; contents are discarded.
  void reset(Shape shape) {
    shape_ = std::move(shape);
    data_.assign(element_count(shape_), T(0));
  }

  bool all_finite() const {
    for (const T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool operator==(const Tensor& other) const = default;

  static std::size_t element_count(const Shape& shape) {
    if (shape.empty()) return 0;
    std::size_t n = 1;
    for (const std::size_t d : shape) n *= d;
    return n;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

// Strided matrix views over externally owned storage.
template <typename T>
struct MatView {
  T* ptr = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t ld = 0;

  T& operator()(std::size_t r, std::size_t c) const { return ptr[r * ld + c]; }
  T* row(std::size_t r) const { return ptr + r * ld; }
  MatView block(std::size_t r0, std::size_t nr, std::size_t c0, std::size_t nc) const {
    return {ptr + r0 * ld + c0, nr, nc, ld};
  }
  MatView row_range(std::size_t r0, std::size_t nr) const { return block(r0, nr, 0, cols); }
};

template <typename T>
struct ConstMatView {
  const T* ptr = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t ld = 0;

  ConstMatView() = default;
  ConstMatView(const T* p, std::size_t r, std::size_t c, std::size_t l) : ptr(p), rows(r), cols(c), ld(l) {}
  ConstMatView(MatView<T> v) : ptr(v.ptr), rows(v.rows), cols(v.cols), ld(v.ld) {}  // NOLINT

  const T& operator()(std::size_t r, std::size_t c) const { return ptr[r * ld + c]; }
  const T* row(std::size_t r) const { return ptr + r * ld; }
  ConstMatView block(std::size_t r0, std::size_t nr, std::size_t c0, std::size_t nc) const {
    return {ptr + r0 * ld + c0, nr, nc, ld};
  }
  ConstMatView row_range(std::size_t r0, std::size_t nr) const { return block(r0, nr, 0, cols); }
};

// Read-only view parameter that does not take part in template deduction,
// so MatView arguments convert implicitly.
template <typename T>
using CView = std::type_identity_t<ConstMatView<T>>;

template <typename T>
MatView<T> view(Tensor<T>& t) {
  return {t.data(), t.rows(), t.cols(), t.cols()};
}

template <typename T>
ConstMatView<T> view(const Tensor<T>& t) {
  return {t.data(), t.rows(), t.cols(), t.cols()};
}

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
  std::vector<To> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<To>(t[i]);
  return Tensor<To>(t.shape(), std::move(out));
}

}  // namespace morphtag
