#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "pag/errors.hpp"

namespace pag::nn {

// Dense row-major tensor of rank <= 4. Rank-4 tensors use NCHW layout.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(numel_of(shape_), T(0));
  }

  Tensor(std::vector<int> shape, std::vector<T> values)
      : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != numel_of(shape_))
      throw ShapeError("tensor: value count does not match shape");
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  int rank() const { return static_cast<int>(shape_.size()); }
  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_.at(i); }
  size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](size_t i) { return data_[i]; }
  const T& operator[](size_t i) const { return data_[i]; }

  // Rank-4 accessor (n, c, h, w).
  T& at(int n, int c, int h, int w) {
    return data_[((static_cast<size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(int n, int c, int h, int w) const {
    return data_[((static_cast<size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  // Rank-2 accessor (n, f).
  T& at(int n, int f) { return data_[static_cast<size_t>(n) * shape_[1] + f]; }
  const T& at(int n, int f) const { return data_[static_cast<size_t>(n) * shape_[1] + f]; }

  // Elements per leading-dim item (product of dims 1..rank-1).
  size_t item_size() const {
    if (shape_.empty()) return 0;
    return numel_of(shape_) / static_cast<size_t>(shape_[0]);
  }

  // Copy of rows [begin, end) along dim 0.
  Tensor slice(int begin, int end) const {
    if (begin < 0 || end > shape_.at(0) || begin > end)
      throw ShapeError("tensor slice out of range");
    std::vector<int> s = shape_;
    s[0] = end - begin;
    Tensor out(s);
    size_t isz = item_size();
    std::copy(data_.begin() + begin * isz, data_.begin() + end * isz, out.data_.begin());
    return out;
  }

  void set_slice(int begin, const Tensor& rows) {
    size_t isz = item_size();
    if (rows.item_size() != isz) throw ShapeError("tensor set_slice: item size mismatch");
    std::copy(rows.data_.begin(), rows.data_.end(), data_.begin() + begin * isz);
  }

  Tensor reshaped(std::vector<int> shape) const {
    if (numel_of(shape) != data_.size()) throw ShapeError("tensor reshape: element count mismatch");
    Tensor out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
  }

  T min_value() const { return *std::min_element(data_.begin(), data_.end()); }
  T max_value() const { return *std::max_element(data_.begin(), data_.end()); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << ")";
    return os.str();
  }

  static size_t numel_of(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
      if (d < 0) throw ShapeError("tensor: negative dimension");
      n *= static_cast<size_t>(d);
    }
    return shape.empty() ? 0 : n;
  }

 private:
  std::vector<int> shape_;
  std::vector<T> data_;

  template <typename U>
  friend class Tensor;
};

template <typename T>
bool operator==(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() && a.values() == b.values();
}

}  // namespace pag::nn
