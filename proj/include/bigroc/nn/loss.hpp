#pragma once

#include <cmath>

#include "bigroc/nn/tensor.hpp"

namespace bigroc::nn {

/// Numerically stable softmax, accumulated in double.
template <class T>
Eigen::VectorXd softmax(const Vec<T>& logits) {
  const Eigen::VectorXd z = logits.template cast<double>();
  const Eigen::VectorXd e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

template <class T>
double log_sum_exp(const Vec<T>& logits) {
  const Eigen::VectorXd z = logits.template cast<double>();
  const double m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}

/// Cross-entropy of softmax(logits) against class y.
template <class T>
double cross_entropy(const Vec<T>& logits, int y) {
  return log_sum_exp(logits) - static_cast<double>(logits[y]);
}

/// Cross-entropy and its gradient w.r.t. the logits (softmax - onehot).
template <class T>
double cross_entropy_grad(const Vec<T>& logits, int y, Vec<T>& grad) {
  const Eigen::VectorXd p = softmax(logits);
  grad = p.cast<T>();
  grad[y] -= T(1);
  return cross_entropy(logits, y);
}

/// Index of the largest entry; ties go to the lowest index.
template <class Derived>
int argmax(const Eigen::MatrixBase<Derived>& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = static_cast<int>(i);
  return best;
}

}  // namespace bigroc::nn
