#pragma once

#include <Eigen/Core>

#include <complex>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

#include "dyna/error.hpp"

namespace dyna {

using Index = Eigen::Index;

// Extent of a dense batch of channel-first grids: n x c x h x w, row-major.
// A single image is a batch of one.
struct Shape {
  Index n = 1;
  Index c = 1;
  Index h = 1;
  Index w = 1;

  constexpr Index size() const { return n * c * h * w; }
  constexpr Index plane() const { return h * w; }
  constexpr bool operator==(const Shape&) const = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

inline std::ostream& operator<<(std::ostream& os, const Shape& s) { return os << s.str(); }

template <typename Scalar>
class Tensor {
 public:
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using PlaneMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using PlaneMap = Eigen::Map<PlaneMatrix>;
  using ConstPlaneMap = Eigen::Map<const PlaneMatrix>;

  Tensor() = default;
  explicit Tensor(const Shape& shape) : shape_(shape), data_(Storage::Zero(shape.size())) {}
  Tensor(const Shape& shape, Scalar fill) : shape_(shape), data_(Storage::Constant(shape.size(), fill)) {}
  Tensor(const Shape& shape, Storage data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) throw ShapeError("tensor data length does not match shape " + shape_.str());
  }

  static Tensor zeros(const Shape& shape) { return Tensor(shape); }
  static Tensor ones(const Shape& shape) { return Tensor(shape, Scalar(1)); }

  const Shape& shape() const { return shape_; }
  Index size() const { return data_.size(); }
  Index batch() const { return shape_.n; }
  Index channels() const { return shape_.c; }
  Index height() const { return shape_.h; }
  Index width() const { return shape_.w; }

  Storage& values() { return data_; }
  const Storage& values() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Index offset(Index n, Index c, Index y, Index x) const { return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x; }
  Scalar& operator()(Index n, Index c, Index y, Index x) { return data_[offset(n, c, y, x)]; }
  Scalar operator()(Index n, Index c, Index y, Index x) const { return data_[offset(n, c, y, x)]; }
  // Single-image accessors.
  Scalar& operator()(Index c, Index y, Index x) { return data_[offset(0, c, y, x)]; }
  Scalar operator()(Index c, Index y, Index x) const { return data_[offset(0, c, y, x)]; }

  PlaneMap plane(Index n, Index c) { return PlaneMap(data_.data() + offset(n, c, 0, 0), shape_.h, shape_.w); }
  ConstPlaneMap plane(Index n, Index c) const {
    return ConstPlaneMap(data_.data() + offset(n, c, 0, 0), shape_.h, shape_.w);
  }

  // Copy of one batch item as a batch of one.
  Tensor item(Index n) const {
    Shape s = shape_;
    s.n = 1;
    return Tensor(s, data_.segment(n * s.size(), s.size()));
  }

  bool all_finite() const {
    if constexpr (std::is_floating_point_v<Scalar>) {
      return data_.isFinite().all();
    } else {
      return data_.real().isFinite().all() && data_.imag().isFinite().all();
    }
  }

  Tensor reshaped(const Shape& s) const {
    if (s.size() != shape_.size()) throw ShapeError("cannot reshape " + shape_.str() + " to " + s.str());
    return Tensor(s, data_);
  }

 private:
  Shape shape_{0, 0, 0, 0};
  Storage data_;
};

using RealGrid = Tensor<double>;
using ComplexGrid = Tensor<std::complex<double>>;

// Stacks equally shaped grids along the batch axis.
template <typename Scalar, typename Range>
Tensor<Scalar> stack(const Range& items) {
  auto it = std::begin(items);
  if (it == std::end(items)) throw ShapeError("cannot stack an empty range");
  Shape s = it->shape();
  Index count = 0;
  for (const auto& t : items) {
    Shape ts = t.shape();
    ts.n = s.n;
    if (!(ts == s)) throw ShapeError("stack: mismatched shapes " + s.str() + " vs " + t.shape().str());
    count += t.shape().n;
  }
  Shape out_shape = s;
  out_shape.n = count;
  Tensor<Scalar> out(out_shape);
  Index pos = 0;
  for (const auto& t : items) {
    out.values().segment(pos, t.size()) = t.values();
    pos += t.size();
  }
  return out;
}

inline RealGrid stack_grids(const std::vector<RealGrid>& items) { return stack<double>(items); }

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
}

inline void require_finite(const RealGrid& t, const char* what) {
  if (!t.all_finite()) throw NumericError(std::string(what) + ": non-finite input");
}

}  // namespace dyna
