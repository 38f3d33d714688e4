#pragma once

#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mgtta/types.hpp"

namespace mgtta {

// Dense tensor of rank 1 or 2 over doubles. Rank-1 tensors are stored as a
// 1 x n matrix; shape() keeps the logical rank. data() is flat row-major.
class Tensor {
 public:
  Tensor() : shape_{0}, m_(1, 0) {}

  static Tensor vector(Index n) {
    Tensor t;
    t.shape_ = {n};
    t.m_ = Mat::Zero(1, n);
    return t;
  }

  static Tensor vector(const Vec& v) {
    Tensor t = vector(v.size());
    t.m_.row(0) = v.transpose();
    return t;
  }

  static Tensor vector(std::initializer_list<Scalar> vals) {
    Tensor t = vector(static_cast<Index>(vals.size()));
    Index i = 0;
    for (Scalar v : vals) t.m_(0, i++) = v;
    return t;
  }

  static Tensor matrix(Index rows, Index cols) {
    Tensor t;
    t.shape_ = {rows, cols};
    t.m_ = Mat::Zero(rows, cols);
    return t;
  }

  static Tensor matrix(const Mat& m) {
    Tensor t;
    t.shape_ = {m.rows(), m.cols()};
    t.m_ = m;
    return t;
  }

  static Tensor matrix(std::initializer_list<std::initializer_list<Scalar>> rows) {
    const Index r = static_cast<Index>(rows.size());
    const Index c = r > 0 ? static_cast<Index>(rows.begin()->size()) : 0;
    Tensor t = matrix(r, c);
    Index i = 0;
    for (const auto& row : rows) {
      if (static_cast<Index>(row.size()) != c)
        throw std::invalid_argument("Tensor::matrix: ragged initializer");
      Index j = 0;
      for (Scalar v : row) t.m_(i, j++) = v;
      ++i;
    }
    return t;
  }

  static Tensor full(Index n, Scalar value) {
    Tensor t = vector(n);
    t.m_.setConstant(value);
    return t;
  }

  const std::vector<Index>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  Index size() const { return m_.size(); }
  Index rows() const { return m_.rows(); }
  Index cols() const { return m_.cols(); }

  Scalar& operator()(Index i) { return m_(0, i); }
  Scalar operator()(Index i) const { return m_(0, i); }
  Scalar& operator()(Index i, Index j) { return m_(i, j); }
  Scalar operator()(Index i, Index j) const { return m_(i, j); }

  Mat& m() { return m_; }
  const Mat& m() const { return m_; }

  // flat row-major view
  std::span<Scalar> data() { return {m_.data(), static_cast<std::size_t>(m_.size())}; }
  std::span<const Scalar> data() const { return {m_.data(), static_cast<std::size_t>(m_.size())}; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const { return m_.allFinite(); }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.m_ == b.m_;
  }

 private:
  std::vector<Index> shape_;
  Mat m_;
};

inline void require_shape(bool ok, const std::string& what, const Tensor& a, const Tensor& b) {
  if (!ok)
    throw std::invalid_argument(what + ": incompatible shapes " + a.shape_str() + " and " +
                                b.shape_str());
}

}  // namespace mgtta
