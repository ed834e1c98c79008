#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "irim/error.hpp"

namespace irim {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense row-major real array. Rank-4 tensors use the NCHW layout.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_)) {
      throw ShapeError("tensor data has " + std::to_string(data_.size()) +
                       " elements but shape " + shape_string(shape_) +
                       " needs " + std::to_string(shape_size(shape_)));
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // NCHW element access for rank-4 tensors.
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h,
              std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  Tensor& operator+=(const Tensor& other) {
    require_same_shape(other, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }
  Tensor& operator-=(const Tensor& other) {
    require_same_shape(other, "-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
  }
  Tensor& operator*=(T s) {
    for (auto& v : data_) v *= s;
    return *this;
  }

  friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
  friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
  friend Tensor operator*(Tensor a, T s) { return a *= s; }
  friend Tensor operator*(T s, Tensor a) { return a *= s; }

  bool operator==(const Tensor& other) const = default;

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  void require_same_shape(const Tensor& other, const char* what) const {
    if (shape_ != other.shape_) {
      throw ShapeError(std::string(what) + ": shape mismatch " +
                       shape_string(shape_) + " vs " +
                       shape_string(other.shape_));
    }
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

using RealTensor = Tensor<double>;

template <typename T>
T dot(const Tensor<T>& a, const Tensor<T>& b) {
  a.require_same_shape(b, "dot");
  // Accumulate in double so float tensors still give stable inner products.
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return static_cast<T>(acc);
}

template <typename T>
T squared_norm(const Tensor<T>& a) {
  return dot(a, a);
}

template <typename T>
T max_abs(const Tensor<T>& a) {
  T m = 0;
  for (T v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  a.require_same_shape(b, "max_abs_diff");
  T m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <typename T>
bool all_finite(std::span<const T> values) {
  return std::all_of(values.begin(), values.end(),
                     [](T v) { return std::isfinite(v); });
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  return all_finite(std::span<const T>(t.data()));
}

/// Throws NumericalError naming `what` if any element is NaN or infinite.
template <typename T>
void require_finite(const Tensor<T>& t, const std::string& what) {
  if (!all_finite(t)) throw NumericalError(what + ": non-finite value");
}

/// Channels [begin, end) of a rank-4 tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin,
                         std::size_t end) {
  if (x.rank() != 4 || begin > end || end > x.extent(1)) {
    throw ShapeError("slice_channels: bad range [" + std::to_string(begin) +
                     "," + std::to_string(end) + ") for " +
                     shape_string(x.shape()));
  }
  const std::size_t n = x.extent(0), c = x.extent(1);
  const std::size_t plane = x.extent(2) * x.extent(3);
  Tensor<T> out({n, end - begin, x.extent(2), x.extent(3)});
  for (std::size_t b = 0; b < n; ++b) {
    std::copy_n(x.data().begin() + (b * c + begin) * plane,
                (end - begin) * plane,
                out.data().begin() + b * (end - begin) * plane);
  }
  return out;
}

/// Concatenates two rank-4 tensors along the channel axis.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 4 || b.rank() != 4 || a.extent(0) != b.extent(0) ||
      a.extent(2) != b.extent(2) || a.extent(3) != b.extent(3)) {
    throw ShapeError("concat_channels: incompatible " +
                     shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  const std::size_t n = a.extent(0), ca = a.extent(1), cb = b.extent(1);
  const std::size_t plane = a.extent(2) * a.extent(3);
  Tensor<T> out({n, ca + cb, a.extent(2), a.extent(3)});
  auto dst = out.data().begin();
  for (std::size_t i = 0; i < n; ++i) {
    dst = std::copy_n(a.data().begin() + i * ca * plane, ca * plane, dst);
    dst = std::copy_n(b.data().begin() + i * cb * plane, cb * plane, dst);
  }
  return out;
}

/// Writes `src` into channels starting at `begin` of `dst`.
template <typename T>
void assign_channels(Tensor<T>& dst, std::size_t begin, const Tensor<T>& src) {
  if (dst.rank() != 4 || src.rank() != 4 || dst.extent(0) != src.extent(0) ||
      dst.extent(2) != src.extent(2) || dst.extent(3) != src.extent(3) ||
      begin + src.extent(1) > dst.extent(1)) {
    throw ShapeError("assign_channels: cannot place " +
                     shape_string(src.shape()) + " into " +
                     shape_string(dst.shape()));
  }
  const std::size_t n = dst.extent(0), c = dst.extent(1), cs = src.extent(1);
  const std::size_t plane = dst.extent(2) * dst.extent(3);
  for (std::size_t b = 0; b < n; ++b) {
    std::copy_n(src.data().begin() + b * cs * plane, cs * plane,
                dst.data().begin() + (b * c + begin) * plane);
  }
}

/// Complex image stored as paired real channels, each shaped [N, 1, H, W].
template <typename T>
struct ComplexField {
  Tensor<T> re;
  Tensor<T> im;

  ComplexField() = default;
  ComplexField(Tensor<T> re_part, Tensor<T> im_part)
      : re(std::move(re_part)), im(std::move(im_part)) {
    re.require_same_shape(im, "ComplexField");
    if (re.rank() != 4 || re.extent(1) != 1) {
      throw ShapeError("ComplexField parts must be [N,1,H,W], got " +
                       shape_string(re.shape()));
    }
  }

  static ComplexField zeros(std::size_t n, std::size_t h, std::size_t w) {
    return ComplexField(Tensor<T>({n, 1, h, w}), Tensor<T>({n, 1, h, w}));
  }

  std::size_t batch() const { return re.extent(0); }
  std::size_t height() const { return re.extent(2); }
  std::size_t width() const { return re.extent(3); }
  const Shape& shape() const { return re.shape(); }

  ComplexField& operator+=(const ComplexField& o) {
    re += o.re;
    im += o.im;
    return *this;
  }
  ComplexField& operator-=(const ComplexField& o) {
    re -= o.re;
    im -= o.im;
    return *this;
  }
  ComplexField& operator*=(T s) {
    re *= s;
    im *= s;
    return *this;
  }
  friend ComplexField operator+(ComplexField a, const ComplexField& b) {
    return a += b;
  }
  friend ComplexField operator-(ComplexField a, const ComplexField& b) {
    return a -= b;
  }
  friend ComplexField operator*(ComplexField a, T s) { return a *= s; }
  bool operator==(const ComplexField&) const = default;

  /// Two-channel real view [N, 2, H, W] (re, im).
  Tensor<T> as_channels() const { return concat_channels(re, im); }
  static ComplexField from_channels(const Tensor<T>& x) {
    if (x.rank() != 4 || x.extent(1) != 2) {
      throw ShapeError("from_channels expects [N,2,H,W], got " +
                       shape_string(x.shape()));
    }
    return ComplexField(slice_channels(x, 0, 1), slice_channels(x, 1, 2));
  }

  Tensor<T> magnitude() const {
    Tensor<T> out(re.shape());
    for (std::size_t i = 0; i < re.size(); ++i)
      out[i] = std::hypot(re[i], im[i]);
    return out;
  }
};

/// Real inner product <a, b> = Re(sum conj(a) b) of two complex fields.
template <typename T>
T dot(const ComplexField<T>& a, const ComplexField<T>& b) {
  return dot(a.re, b.re) + dot(a.im, b.im);
}

template <typename T>
T squared_norm(const ComplexField<T>& a) {
  return dot(a, a);
}

template <typename T>
T max_abs_diff(const ComplexField<T>& a, const ComplexField<T>& b) {
  return std::max(max_abs_diff(a.re, b.re), max_abs_diff(a.im, b.im));
}

}  // namespace irim
