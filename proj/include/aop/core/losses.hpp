#pragma once

#include <algorithm>
#include <cmath>

#include "aop/core/types.hpp"

namespace aop {

template <typename Scalar>
struct LossAndGradient {
  Scalar loss{};
  VectorX<Scalar> gradient;  // d loss / d logits
};

template <typename Scalar>
Scalar sigmoid(Scalar s) {
  return s >= Scalar(0) ? Scalar(1) / (Scalar(1) + std::exp(-s))
                        : std::exp(s) / (Scalar(1) + std::exp(s));
}

/// log(1 + e^s) without overflow.
template <typename Scalar>
Scalar softplus(Scalar s) {
  return std::max(s, Scalar(0)) + std::log1p(std::exp(-std::abs(s)));
}

/// Softmax cross-entropy toward `target`; gradient is softmax - onehot.
template <typename Derived>
LossAndGradient<typename Derived::Scalar> softmax_cross_entropy(
    const Eigen::MatrixBase<Derived>& logits, Eigen::Index target) {
  using Scalar = typename Derived::Scalar;
  if (target < 0 || target >= logits.size()) throw InputError("loss target outside logit range");
  const Scalar mx = logits.maxCoeff();
  VectorX<Scalar> p = (logits.array() - mx).exp().matrix();
  const Scalar z = p.sum();
  p /= z;
  LossAndGradient<Scalar> out;
  out.loss = mx + std::log(z) - logits(target);
  out.gradient = p;
  out.gradient(target) -= Scalar(1);
  return out;
}

/// Sum over classes of sigmoid binary cross-entropy against the one-hot
/// target. d loss / d s_j = sigmoid(s_j) - [j == target], so each logit's
/// gradient depends on that logit alone.
template <typename Derived>
LossAndGradient<typename Derived::Scalar> sigmoid_binary_cross_entropy(
    const Eigen::MatrixBase<Derived>& logits, Eigen::Index target) {
  using Scalar = typename Derived::Scalar;
  if (target < 0 || target >= logits.size()) throw InputError("loss target outside logit range");
  LossAndGradient<Scalar> out;
  out.gradient.resize(logits.size());
  for (Eigen::Index j = 0; j < logits.size(); ++j) {
    const Scalar s = logits(j);
    const Scalar y = j == target ? Scalar(1) : Scalar(0);
    out.loss += softplus(s) - y * s;
    out.gradient(j) = sigmoid(s) - y;
  }
  return out;
}

template <typename Derived>
LossAndGradient<typename Derived::Scalar> classification_loss(
    const Eigen::MatrixBase<Derived>& logits, Eigen::Index target, LossMode mode) {
  return mode == LossMode::softmax_ce ? softmax_cross_entropy(logits, target)
                                      : sigmoid_binary_cross_entropy(logits, target);
}

}  // namespace aop
