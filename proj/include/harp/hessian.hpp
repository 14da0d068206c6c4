#pragma once

#include "harp/core.hpp"

#include <limits>

namespace harp {

/// Returns (1 - w) * hbar + w * sample. Rejects w outside [0, 1].
Matrix update_moving_average(const Matrix& hbar, const Matrix& sample, double w);

struct Regularization {
  Matrix hhat;
  Vector eigenvalues;  // of hhat, ascending
  bool clipped = false;
};

/// Positive-definite map f(H) = (H^T H + eps I)^{1/2} of a symmetric matrix.
///
/// Uses the eigendecomposition H = V diag(l) V^T, so f(H) = V diag(sqrt(l^2 + eps)) V^T.
/// Eigenvalues below lambda_max / condition_ceiling are raised to that floor and
/// the result is flagged as clipped.
Regularization regularize_detailed(const Matrix& hbar, double eps,
                                   double condition_ceiling = std::numeric_limits<double>::infinity());

Matrix regularize(const Matrix& hbar, double eps,
                  double condition_ceiling = std::numeric_limits<double>::infinity());

/// Lower-triangular C with C C^T = hhat^{-1}.
///
/// Cholesky of hhat, then Cholesky of its inverse. If either factorization fails
/// the eigendecomposition route V diag(l^{-1/2}) is triangularized by QR. Throws
/// NumericalError when hhat is not positive definite.
Matrix shaping_factor(const Matrix& hhat);

/// Moving-average Hessian estimate and its regularized, factorized companion.
/// Starts at hbar = hhat = I.
class HessianTracker {
 public:
  explicit HessianTracker(Index dimension, double condition_ceiling = 1e8);

  const Matrix& hbar() const { return hbar_; }
  const Matrix& hhat() const { return hhat_; }
  const Matrix& shaping() const { return shaping_; }
  std::size_t updates() const { return updates_; }
  std::size_t clip_count() const { return clip_count_; }
  double condition_ceiling() const { return condition_ceiling_; }

  void update(const Matrix& sample, double w);
  void regularize(double eps);

 private:
  Matrix hbar_;
  Matrix hhat_;
  Matrix shaping_;
  double condition_ceiling_;
  std::size_t updates_ = 0;
  std::size_t clip_count_ = 0;
};

}  // namespace harp
