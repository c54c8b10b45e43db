#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <new>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "vfgs/errors.hpp"

namespace vfgs {

using Index = std::int64_t;
using Shape = std::vector<Index>;

inline Index numel_of(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), Index{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i];
  os << ')';
  return os.str();
}

// Cache-line aligned allocation. Eigen peels unaligned heads with scalar
// code, so malloc-dependent alignment would otherwise change the rounding of
// reductions from one run to the next.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

template <typename T>
using Storage = std::vector<T, AlignedAllocator<T>>;

// Dense row-major array with value semantics. A FeatureMap is a rank-4
// Tensor laid out (batch, channels, height, width); sequences are
// (batch, length, features).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(static_cast<std::size_t>(numel_of(shape_)), fill) {}
  Tensor(Shape shape, const std::vector<T>& data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (static_cast<Index>(data_.size()) != numel_of(shape_))
      throw ShapeError("tensor data size " + std::to_string(data_.size()) +
                       " does not match shape " + vfgs::to_string(shape_));
  }
  Tensor(Shape shape, Storage<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<Index>(data_.size()) != numel_of(shape_))
      throw ShapeError("tensor data size " + std::to_string(data_.size()) +
                       " does not match shape " + vfgs::to_string(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor zeros_like(const Tensor& o) { return Tensor(o.shape_); }
  static Tensor full(Shape shape, T v) { return Tensor(std::move(shape), v); }

  const Shape& shape() const { return shape_; }
  Index dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  Index numel() const { return static_cast<Index>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  Storage<T>& vec() { return data_; }
  const Storage<T>& vec() const { return data_; }

  T& operator[](Index i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](Index i) const { return data_[static_cast<std::size_t>(i)]; }

  // 4-D accessor (b, c, h, w).
  T& at(Index b, Index c, Index h, Index w) {
    return data_[static_cast<std::size_t>(((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  const T& at(Index b, Index c, Index h, Index w) const {
    return data_[static_cast<std::size_t>(((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }

  Tensor reshaped(Shape s) const {
    if (numel_of(s) != numel())
      throw ShapeError("cannot reshape " + vfgs::to_string(shape_) + " to " + vfgs::to_string(s));
    return Tensor(std::move(s), data_);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor& operator+=(const Tensor& o) {
    check_same(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  T max_abs() const {
    T m = T(0);
    for (T v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  T sum() const { return std::accumulate(data_.begin(), data_.end(), T(0)); }

  void check_same(const Tensor& o, const char* what) const {
    if (o.shape_ != shape_)
      throw ShapeError(std::string(what) + ": shape mismatch " + vfgs::to_string(shape_) + " vs " +
                       vfgs::to_string(o.shape_));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  Storage<T> data_;
};

inline void require_rank(const Shape& s, std::size_t r, const char* what) {
  if (s.size() != r)
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(r) + ", got " +
                     to_string(s));
}

}  // namespace vfgs
