#pragma once

// Probability utilities shared by training, probing, editing and evaluation.
// All functions accept arbitrary Eigen dense expressions and are templated on
// the scalar type of the argument.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "pte/errors.hpp"

namespace pte {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Floor applied to student probabilities inside a log.
inline constexpr double kProbFloor = 1e-12;

/// Retained-class mass below which the masked target degenerates to uniform.
inline constexpr double kMaskedMassFloor = 1e-12;

template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::DenseBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  const Scalar m = v.maxCoeff();
  return m + std::log((v.derived().array() - m).exp().sum());
}

/// Softmax of `logits / temperature`. Works on any vector expression.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax_temperature(
    const Eigen::MatrixBase<Derived>& logits, typename Derived::Scalar temperature) {
  using Scalar = typename Derived::Scalar;
  if (!(temperature > Scalar(0))) throw DomainError("softmax temperature must be positive");
  if (!logits.allFinite()) throw DomainError("softmax received a non-finite logit");
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> z = logits.derived().template cast<Scalar>();
  z /= temperature;
  z.array() -= z.maxCoeff();
  z = z.array().exp();
  return z / z.sum();
}

/// Row-wise softmax over a B x K logit matrix.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>
softmax_rows(const Eigen::MatrixBase<Derived>& logits, typename Derived::Scalar temperature = 1) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> p(logits.rows(),
                                                                         logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i)
    p.row(i) = softmax_temperature(logits.row(i).transpose(), temperature).transpose();
  return p;
}

/// Elementwise clip of a perturbation to the L-infinity ball of radius eps.
/// Returns an expression; idempotent and the identity inside the ball.
template <typename Derived>
auto project_linf(const Eigen::DenseBase<Derived>& delta, typename Derived::Scalar eps) {
  return delta.derived().cwiseMax(-eps).cwiseMin(eps);
}

/// Normalize(Mask(Softmax(z / T))): zero the masked classes and renormalize
/// over the rest. Computed in the log domain so ratios among retained classes
/// survive even when the masked classes dominate. When the retained mass of the
/// unmasked softmax is below kMaskedMassFloor the result is uniform over the
/// retained classes.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> masked_target(
    const Eigen::MatrixBase<Derived>& logits, std::span<const int> masked,
    typename Derived::Scalar temperature) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index k = logits.size();
  if (!(temperature > Scalar(0))) throw DomainError("distillation temperature must be positive");
  if (!logits.allFinite()) throw DomainError("masked target received a non-finite logit");
  std::vector<bool> keep(static_cast<std::size_t>(k), true);
  for (int u : masked) {
    if (u < 0 || u >= k) throw DomainError("masked class out of range");
    keep[static_cast<std::size_t>(u)] = false;
  }
  Eigen::Index retained = 0;
  for (bool b : keep) retained += b ? 1 : 0;
  if (retained == 0) throw DomainError("mask removes every class");

  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> z = logits.derived().template cast<Scalar>() / temperature;
  Scalar kept_max = -std::numeric_limits<Scalar>::infinity();
  for (Eigen::Index i = 0; i < k; ++i)
    if (keep[static_cast<std::size_t>(i)]) kept_max = std::max(kept_max, z(i));

  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(k);
  Scalar kept_sum = 0;
  for (Eigen::Index i = 0; i < k; ++i) {
    if (!keep[static_cast<std::size_t>(i)]) continue;
    out(i) = std::exp(z(i) - kept_max);
    kept_sum += out(i);
  }
  // log of the retained mass under the unmasked softmax
  const Scalar log_kept_mass = kept_max + std::log(kept_sum) - log_sum_exp(z);
  if (log_kept_mass < std::log(Scalar(kMaskedMassFloor))) {
    for (Eigen::Index i = 0; i < k; ++i)
      out(i) = keep[static_cast<std::size_t>(i)] ? Scalar(1) / Scalar(retained) : Scalar(0);
    return out;
  }
  return out / kept_sum;
}

/// KL(p || q) in nats with q floored at kProbFloor inside the log.
template <typename DerivedP, typename DerivedQ>
typename DerivedP::Scalar kl_divergence(const Eigen::MatrixBase<DerivedP>& p,
                                        const Eigen::MatrixBase<DerivedQ>& q) {
  using Scalar = typename DerivedP::Scalar;
  Scalar kl = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const Scalar pi = p(i);
    if (pi <= Scalar(0)) continue;
    kl += pi * (std::log(pi) - std::log(std::max<Scalar>(q(i), Scalar(kProbFloor))));
  }
  return kl;
}

/// Cross-entropy of one logit row against an integer label.
template <typename Derived>
typename Derived::Scalar cross_entropy(const Eigen::MatrixBase<Derived>& logits, int label) {
  return log_sum_exp(logits) - logits(label);
}

/// Index of the largest entry; ties resolve to the lowest index.
template <typename Derived>
int argmax_lowest(const Eigen::DenseBase<Derived>& row) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < row.size(); ++i)
    if (row(i) > row(best)) best = i;
  return static_cast<int>(best);
}

}  // namespace pte
