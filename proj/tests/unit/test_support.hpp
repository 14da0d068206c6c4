#pragma once

#include "harp/core.hpp"

#include <cmath>
#include <functional>

namespace harp::test {

// Central finite differences, used as an independent oracle for analytic derivatives.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

inline Matrix fd_hessian(const std::function<Vector(const Vector&)>& grad, const Vector& x, double h) {
  Matrix m(x.size(), x.size());
  for (Index j = 0; j < x.size(); ++j) {
    Vector xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    m.col(j) = (grad(xp) - grad(xm)) / (2.0 * h);
  }
  return 0.5 * (m + m.transpose());
}

inline double relative_error(const Matrix& got, const Matrix& want) {
  const double scale = std::max(want.norm(), 1e-300);
  return (got - want).norm() / scale;
}

inline double spectral_norm(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

// Ordinary least-squares slope of y on x.
inline double ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  return sxy / sxx;
}

}  // namespace harp::test
