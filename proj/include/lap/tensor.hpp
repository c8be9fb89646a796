#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace lap {

/// Extents of a rank-4 (N, C, H, W) tensor.
struct Shape {
  std::int64_t n = 0;
  std::int64_t c = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;

  std::int64_t numel() const { return n * c * h * w; }
  std::int64_t plane() const { return h * w; }
  friend bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    std::ostringstream os;
    os << "(" << n << "x" << c << "x" << h << "x" << w << ")";
    return os.str();
  }
};

inline std::ostream& operator<<(std::ostream& os, const Shape& s) { return os << s.str(); }

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline ShapeError shape_mismatch(const char* what, const Shape& a, const Shape& b) {
  return ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
}

/// Dense row-major (N, C, H, W) tensor. Storage is an Eigen array so that
/// elementwise work composes as Eigen expressions over `array()`.
template <typename Scalar_>
class Tensor {
 public:
  using Scalar = Scalar_;
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Tensor() = default;

  explicit Tensor(const Shape& shape) : shape_(check(shape)), data_(Storage::Zero(shape.numel())) {}

  Tensor(const Shape& shape, Storage data) : shape_(check(shape)), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_.str());
    }
  }

  Tensor(const Shape& shape, std::initializer_list<Scalar> values) : Tensor(shape, from_list(values)) {}

  static Tensor zeros(const Shape& shape) { return Tensor(shape); }
  static Tensor constant(const Shape& shape, Scalar v) {
    return Tensor(shape, Storage::Constant(shape.numel(), v));
  }
  static Tensor ones(const Shape& shape) { return constant(shape, Scalar(1)); }

  const Shape& shape() const { return shape_; }
  std::int64_t size() const { return shape_.numel(); }
  bool empty() const { return size() == 0; }

  Storage& array() { return data_; }
  const Storage& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  std::int64_t index(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  Scalar& operator()(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
    return data_[index(n, c, h, w)];
  }
  Scalar operator()(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return data_[index(n, c, h, w)];
  }
  Scalar& operator[](std::int64_t i) { return data_[i]; }
  Scalar operator[](std::int64_t i) const { return data_[i]; }

  /// Pointer to the (n, c) plane.
  Scalar* plane(std::int64_t n, std::int64_t c) { return data() + index(n, c, 0, 0); }
  const Scalar* plane(std::int64_t n, std::int64_t c) const { return data() + index(n, c, 0, 0); }

  Tensor reshaped(const Shape& shape) const {
    if (shape.numel() != size()) throw shape_mismatch("reshape", shape_, shape);
    return Tensor(shape, data_);
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  bool all_finite() const { return data_.isFinite().all(); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && (a.data_ == b.data_).all();
  }

 private:
  static Shape check(const Shape& s) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) throw ShapeError("negative extent in shape " + s.str());
    return s;
  }
  static Storage from_list(std::initializer_list<Scalar> values) {
    Storage s(static_cast<Eigen::Index>(values.size()));
    std::copy(values.begin(), values.end(), s.data());
    return s;
  }

  Shape shape_{};
  Storage data_{};
};

using Tensord = Tensor<double>;
using Tensorf = Tensor<float>;

/// Row-major (rows x cols) matrix view over contiguous tensor storage.
template <typename Scalar>
using MatrixMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename Scalar>
using ConstMatrixMap =
    Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

enum class ReduceAxes { Spatial, Channel };
enum class ReduceMode { Mean, Max };

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape() != b.shape()) throw shape_mismatch("add", a.shape(), b.shape());
  return Tensor<Scalar>(a.shape(), a.array() + b.array());
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar s) {
  return Tensor<Scalar>(a.shape(), a.array() * s);
}

/// Elementwise product. `b` is either the same shape as `a`, a channel gate
/// (N or 1)xCx1x1, or a spatial gate Nx1xHxW.
template <typename Scalar>
Tensor<Scalar> elementwise_mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa == sb) return Tensor<Scalar>(sa, a.array() * b.array());

  Tensor<Scalar> out(sa);
  const std::int64_t hw = sa.plane();
  const bool channel_gate = sb.c == sa.c && sb.h == 1 && sb.w == 1 && (sb.n == sa.n || sb.n == 1);
  const bool spatial_gate = sb.n == sa.n && sb.c == 1 && sb.h == sa.h && sb.w == sa.w;
  if (channel_gate) {
    for (std::int64_t n = 0; n < sa.n; ++n) {
      for (std::int64_t c = 0; c < sa.c; ++c) {
        const Scalar g = b(sb.n == 1 ? 0 : n, c, 0, 0);
        Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> src(a.plane(n, c), hw);
        Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>> dst(out.plane(n, c), hw);
        dst = src * g;
      }
    }
    return out;
  }
  if (spatial_gate) {
    for (std::int64_t n = 0; n < sa.n; ++n) {
      Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> g(b.plane(n, 0), hw);
      for (std::int64_t c = 0; c < sa.c; ++c) {
        Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> src(a.plane(n, c), hw);
        Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>> dst(out.plane(n, c), hw);
        dst = src * g;
      }
    }
    return out;
  }
  throw shape_mismatch("elementwise_mul", sa, sb);
}

/// Mean or max over {H, W} (result N x C x 1 x 1) or over {C} (result N x 1 x H x W).
template <typename Scalar>
Tensor<Scalar> reduce(const Tensor<Scalar>& a, ReduceAxes axes, ReduceMode mode) {
  const Shape& s = a.shape();
  const std::int64_t hw = s.plane();
  if (axes == ReduceAxes::Spatial) {
    if (hw == 0) throw ShapeError("reduce over empty spatial domain " + s.str());
    Tensor<Scalar> out(Shape{s.n, s.c, 1, 1});
    for (std::int64_t n = 0; n < s.n; ++n) {
      for (std::int64_t c = 0; c < s.c; ++c) {
        Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> p(a.plane(n, c), hw);
        out(n, c, 0, 0) = mode == ReduceMode::Mean ? p.sum() / Scalar(hw) : p.maxCoeff();
      }
    }
    return out;
  }
  if (s.c == 0) throw ShapeError("reduce over empty channel domain " + s.str());
  Tensor<Scalar> out(Shape{s.n, 1, s.h, s.w});
  for (std::int64_t n = 0; n < s.n; ++n) {
    Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>> dst(out.plane(n, 0), hw);
    dst = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(a.plane(n, 0), hw);
    for (std::int64_t c = 1; c < s.c; ++c) {
      Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> p(a.plane(n, c), hw);
      if (mode == ReduceMode::Mean) {
        dst += p;
      } else {
        dst = dst.max(p);
      }
    }
    if (mode == ReduceMode::Mean) dst /= Scalar(s.c);
  }
  return out;
}

/// Concatenate along the channel axis.
template <typename Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) throw shape_mismatch("concat_channels", sa, sb);
  Tensor<Scalar> out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::int64_t hw = sa.plane();
  for (std::int64_t n = 0; n < sa.n; ++n) {
    std::copy_n(a.plane(n, 0), sa.c * hw, out.plane(n, 0));
    std::copy_n(b.plane(n, 0), sb.c * hw, out.plane(n, sa.c));
  }
  return out;
}

/// Split off channels [begin, begin + count).
template <typename Scalar>
Tensor<Scalar> slice_channels(const Tensor<Scalar>& a, std::int64_t begin, std::int64_t count) {
  const Shape& s = a.shape();
  if (begin < 0 || count < 0 || begin + count > s.c) {
    throw ShapeError("slice_channels out of range on " + s.str());
  }
  Tensor<Scalar> out(Shape{s.n, count, s.h, s.w});
  for (std::int64_t n = 0; n < s.n; ++n) std::copy_n(a.plane(n, begin), count * s.plane(), out.plane(n, 0));
  return out;
}

template <typename Scalar>
Scalar max_abs_diff(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape() != b.shape()) throw shape_mismatch("max_abs_diff", a.shape(), b.shape());
  if (a.empty()) return Scalar(0);
  return (a.array() - b.array()).abs().maxCoeff();
}

}  // namespace lap
