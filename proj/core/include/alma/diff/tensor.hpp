#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "alma/common.hpp"

namespace alma::diff {

using Scalar = double;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using Index = Eigen::Index;

// Dense real tensor. Everything in this artifact is rank <= 2; shape() reports
// {rows, cols} (a column vector is {n, 1}).
class Tensor {
 public:
  Tensor() = default;
  Tensor(Index rows, Index cols) : m_(Matrix::Zero(rows, cols)) {}
  explicit Tensor(Matrix m) : m_(std::move(m)) {}

  static Tensor zeros(Index rows, Index cols) { return Tensor(Matrix::Zero(rows, cols)); }
  static Tensor constant(Index rows, Index cols, Scalar v) {
    return Tensor(Matrix::Constant(rows, cols, v));
  }

  Index rows() const { return m_.rows(); }
  Index cols() const { return m_.cols(); }
  Index size() const { return m_.size(); }
  std::vector<Index> shape() const { return {m_.rows(), m_.cols()}; }

  Matrix& mat() { return m_; }
  const Matrix& mat() const { return m_; }

  Scalar* data() { return m_.data(); }
  const Scalar* data() const { return m_.data(); }

  bool all_finite() const { return m_.allFinite(); }

  bool same_shape(const Tensor& o) const { return rows() == o.rows() && cols() == o.cols(); }

 private:
  Matrix m_;
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace alma::diff
