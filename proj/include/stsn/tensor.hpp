#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "stsn/errors.hpp"
#include "stsn/rng.hpp"

namespace stsn {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) {
    if (d < 0) throw shape_error("negative extent in shape");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

inline Shape row_major_strides(const Shape& s) {
  Shape st(s.size());
  int64_t acc = 1;
  for (size_t i = s.size(); i-- > 0;) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

/**
 * Dense row-major tensor of arbitrary rank, templated on scalar.
 * Value semantics: copies are deep, moves are cheap. Rank-0 tensors are
 * scalars (numel 1). All heavy math routes through Eigen maps.
 */
template <typename Scalar>
class Tensor {
 public:
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatMap = Eigen::Map<MatrixType>;
  using ConstMatMap = Eigen::Map<const MatrixType>;
  using ArrMap = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
  using ConstArrMap = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>;

  Tensor() = default;
  explicit Tensor(Shape shape)
      : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), Scalar(0)) {}
  Tensor(Shape shape, Scalar fill)
      : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), fill) {}
  Tensor(Shape shape, std::vector<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<int64_t>(data_.size()) != shape_numel(shape_))
      throw shape_error("data size " + std::to_string(data_.size()) + " does not match shape " +
                        shape_str(shape_));
  }

  static Tensor scalar(Scalar v) { return Tensor(Shape{}, std::vector<Scalar>{v}); }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, Scalar v) { return Tensor(std::move(shape), v); }
  static Tensor ones(Shape shape) { return full(std::move(shape), Scalar(1)); }

  static Tensor uniform(Shape shape, Rng& rng, Scalar lo = Scalar(-1), Scalar hi = Scalar(1)) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = static_cast<Scalar>(rng.uniform(double(lo), double(hi)));
    return t;
  }

  static Tensor normal(Shape shape, Rng& rng, Scalar mean = Scalar(0), Scalar stddev = Scalar(1)) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = static_cast<Scalar>(mean + stddev * Scalar(rng.normal()));
    return t;
  }

  const Shape& shape() const { return shape_; }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t dim(int64_t i) const {
    if (i < 0) i += rank();
    if (i < 0 || i >= rank()) throw shape_error("dim index out of range");
    return shape_[static_cast<size_t>(i)];
  }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty() && shape_.empty(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::vector<Scalar>& vec() { return data_; }
  const std::vector<Scalar>& vec() const { return data_; }

  Scalar& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  Scalar operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  template <typename... Ix>
  Scalar& operator()(Ix... ix) {
    return data_[flat_index({static_cast<int64_t>(ix)...})];
  }
  template <typename... Ix>
  Scalar operator()(Ix... ix) const {
    return data_[flat_index({static_cast<int64_t>(ix)...})];
  }

  /// Same data, new shape (numel must match). Copies on lvalues, steals on rvalues.
  Tensor reshaped(Shape s) const& {
    if (shape_numel(s) != numel())
      throw shape_error("reshape " + shape_str(shape_) + " -> " + shape_str(s));
    return Tensor(std::move(s), data_);
  }
  Tensor reshaped(Shape s) && {
    if (shape_numel(s) != numel())
      throw shape_error("reshape " + shape_str(shape_) + " -> " + shape_str(s));
    return Tensor(std::move(s), std::move(data_));
  }

  void fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }
  void set_zero() { fill(Scalar(0)); }

  /// 2-D Eigen view with explicit extents (rows*cols must equal numel).
  MatMap mat(int64_t rows, int64_t cols) {
    check_view(rows, cols);
    return MatMap(data_.data(), rows, cols);
  }
  ConstMatMap mat(int64_t rows, int64_t cols) const {
    check_view(rows, cols);
    return ConstMatMap(data_.data(), rows, cols);
  }
  /// Natural 2-D view of a rank-2 tensor.
  MatMap mat() { return mat(dim(0), dim(1)); }
  ConstMatMap mat() const { return mat(dim(0), dim(1)); }

  ArrMap arr() { return ArrMap(data_.data(), numel()); }
  ConstArrMap arr() const { return ConstArrMap(data_.data(), numel()); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (Scalar v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <typename Other>
  Tensor<Other> cast() const {
    std::vector<Other> out(data_.size());
    for (size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<Other>(data_[i]);
    return Tensor<Other>(shape_, std::move(out));
  }

 private:
  void check_view(int64_t rows, int64_t cols) const {
    if (rows * cols != numel())
      throw shape_error("matrix view " + std::to_string(rows) + "x" + std::to_string(cols) +
                        " over " + shape_str(shape_));
  }

  size_t flat_index(std::initializer_list<int64_t> ix) const {
    if (static_cast<int64_t>(ix.size()) != rank())
      throw shape_error("index rank mismatch on " + shape_str(shape_));
    int64_t flat = 0;
    size_t d = 0;
    for (int64_t i : ix) {
      if (i < 0 || i >= shape_[d]) throw shape_error("index out of range on " + shape_str(shape_));
      flat = flat * shape_[d] + i;
      ++d;
    }
    return static_cast<size_t>(flat);
  }

  Shape shape_;
  std::vector<Scalar> data_;
};

template <typename Scalar>
std::string to_string(const Tensor<Scalar>& t, int64_t max_items = 32) {
  std::ostringstream os;
  os << "Tensor" << shape_str(t.shape()) << " {";
  int64_t n = std::min<int64_t>(t.numel(), max_items);
  for (int64_t i = 0; i < n; ++i) os << (i ? ", " : "") << t[i];
  if (t.numel() > n) os << ", ...";
  os << "}";
  return os.str();
}

}  // namespace stsn
