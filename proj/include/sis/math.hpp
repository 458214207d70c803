#pragma once

#include <Eigen/Dense>

#include <cmath>

namespace sis {

/// Row-wise numerically stable softmax of a logit matrix (rows = samples).
template <typename Derived>
Eigen::MatrixXd softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  Eigen::MatrixXd out = logits.template cast<double>();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double m = out.row(i).maxCoeff();
    out.row(i) = (out.row(i).array() - m).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

/// Softmax of a single logit vector (row or column), returned as a column.
template <typename Derived>
Eigen::VectorXd softmax(const Eigen::MatrixBase<Derived>& logits) {
  Eigen::VectorXd v(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i)
    v(i) = static_cast<double>(logits(i));
  const double m = v.maxCoeff();
  v = (v.array() - m).exp().matrix();
  v /= v.sum();
  return v;
}

template <typename Derived>
double logsumexp(const Eigen::MatrixBase<Derived>& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

inline long long ceil_div(long long a, long long b) { return (a + b - 1) / b; }

}  // namespace sis
