#include "harp/hessian.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>

namespace harp {

Matrix update_moving_average(const Matrix& hbar, const Matrix& sample, double w) {
  if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("moving-average weight must lie in [0, 1]");
  if (hbar.rows() != sample.rows() || hbar.cols() != sample.cols())
    throw ConfigError("Hessian sample has wrong shape");
  if (w == 0.0) return hbar;
  if (w == 1.0) return sample;
  Matrix out = (1.0 - w) * hbar + w * sample;
  // Keep the result bitwise symmetric.
  return 0.5 * (out + out.transpose());
}

Regularization regularize_detailed(const Matrix& hbar, double eps, double condition_ceiling) {
  if (hbar.rows() != hbar.cols()) throw ConfigError("regularize expects a square matrix");
  if (!(eps >= 0.0)) throw ConfigError("regularization eps must be nonnegative");
  if (!hbar.allFinite()) throw NumericalError("Hessian estimate has non-finite entries");

  const Matrix sym = 0.5 * (hbar + hbar.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition failed during regularization");

  Vector root = (eig.eigenvalues().array().square() + eps).sqrt().matrix();
  Regularization out;
  const double top = root.maxCoeff();
  if (!(top > 0.0)) throw NumericalError("regularized Hessian is not positive definite");
  if (std::isfinite(condition_ceiling)) {
    const double floor = top / condition_ceiling;
    for (Index i = 0; i < root.size(); ++i) {
      if (root[i] < floor) {
        root[i] = floor;
        out.clipped = true;
      }
    }
  }
  if (!(root.minCoeff() > 0.0)) throw NumericalError("regularized Hessian is not positive definite");

  const Matrix& v = eig.eigenvectors();
  Matrix hhat = v * root.asDiagonal() * v.transpose();
  out.hhat = 0.5 * (hhat + hhat.transpose());
  std::sort(root.data(), root.data() + root.size());
  out.eigenvalues = root;
  return out;
}

Matrix regularize(const Matrix& hbar, double eps, double condition_ceiling) {
  return regularize_detailed(hbar, eps, condition_ceiling).hhat;
}

namespace {

Matrix lower_from_square_root(const Matrix& m) {
  // m m^T = S; with m^T = Q R we get S = R^T R, and R^T is lower triangular.
  Eigen::HouseholderQR<Matrix> qr(m.transpose());
  Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  Matrix lower = r.transpose();
  for (Index j = 0; j < lower.cols(); ++j) {
    if (lower(j, j) < 0.0) lower.col(j) *= -1.0;
  }
  return lower;
}

}  // namespace

Matrix shaping_factor(const Matrix& hhat) {
  if (hhat.rows() != hhat.cols()) throw ConfigError("shaping_factor expects a square matrix");
  if (!hhat.allFinite()) throw NumericalError("shaping_factor: non-finite matrix");
  const Index d = hhat.rows();

  Eigen::LLT<Matrix> llt(hhat);
  if (llt.info() == Eigen::Success) {
    Matrix inverse = llt.solve(Matrix::Identity(d, d));
    inverse = (0.5 * (inverse + inverse.transpose())).eval();
    Eigen::LLT<Matrix> llt_inv(inverse);
    if (llt_inv.info() == Eigen::Success) {
      Matrix c = llt_inv.matrixL();
      if (c.allFinite()) return c;
    }
  }

  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (hhat + hhat.transpose()));
  if (eig.info() != Eigen::Success || !(eig.eigenvalues().minCoeff() > 0.0))
    throw NumericalError("shaping_factor: matrix is not positive definite");
  Matrix root = eig.eigenvectors() * eig.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal();
  return lower_from_square_root(root);
}

HessianTracker::HessianTracker(Index dimension, double condition_ceiling)
    : hbar_(Matrix::Identity(dimension, dimension)),
      hhat_(Matrix::Identity(dimension, dimension)),
      shaping_(Matrix::Identity(dimension, dimension)),
      condition_ceiling_(condition_ceiling) {
  if (dimension < 1) throw ConfigError("HessianTracker dimension must be at least 1");
  if (!(condition_ceiling >= 1.0)) throw ConfigError("condition ceiling must be at least 1");
}

void HessianTracker::update(const Matrix& sample, double w) {
  hbar_ = update_moving_average(hbar_, sample, w);
  ++updates_;
}

void HessianTracker::regularize(double eps) {
  Regularization reg = regularize_detailed(hbar_, eps, condition_ceiling_);
  if (reg.clipped) ++clip_count_;
  hhat_ = std::move(reg.hhat);
  shaping_ = shaping_factor(hhat_);
}

}  // namespace harp
