#include "harp/hessian.hpp"
#include "harp/estimators.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace harp;
using harp::test::spectral_norm;

namespace {

Matrix random_symmetric(Index d, RandomStream& r) {
  Matrix g(d, d);
  for (Index j = 0; j < d; ++j) g.col(j) = r.normal_vector(d);
  return 0.5 * (g + g.transpose());
}

Matrix random_pd(Index d, RandomStream& r) {
  Matrix g(d, d);
  for (Index j = 0; j < d; ++j) g.col(j) = r.normal_vector(d);
  return g * g.transpose() + 0.1 * Matrix::Identity(d, d);
}

}  // namespace

TEST_CASE("moving average") {
  const Matrix i = Matrix::Identity(3, 3);
  RandomStream r(1);
  const Matrix s = random_symmetric(3, r);
  CHECK(update_moving_average(i, s, 0.0) == i);
  CHECK(update_moving_average(i, s, 1.0) == s);
  CHECK(update_moving_average(i, 3.0 * i, 0.5) == 2.0 * i);
  CHECK_THROWS_AS(update_moving_average(i, s, 1.5), ConfigError);
  CHECK_THROWS_AS(update_moving_average(i, s, -0.1), ConfigError);
  const Matrix m = update_moving_average(random_symmetric(3, r), s, 0.3);
  CHECK(m == m.transpose());
}

TEST_CASE("regularization closed forms") {
  CHECK((regularize(Matrix::Identity(3, 3), 0.0) - Matrix::Identity(3, 3)).norm() < 1e-14);
  const Matrix h = Vector((Vector(2) << 2, -1).finished()).asDiagonal();
  const Matrix f = regularize(h, 0.25);
  CHECK(f(0, 0) == doctest::Approx(std::sqrt(4.25)).epsilon(1e-14));
  CHECK(f(1, 1) == doctest::Approx(std::sqrt(1.25)).epsilon(1e-14));
  CHECK(std::abs(f(0, 1)) < 1e-14);
  CHECK(f(0, 0) == doctest::Approx(2.06155).epsilon(1e-5));
  CHECK(f(1, 1) == doctest::Approx(1.11803).epsilon(1e-5));
}

TEST_CASE("regularization spectral identity and lower bound") {
  RandomStream r(2);
  for (int t = 0; t < 20; ++t) {
    const Matrix h = random_symmetric(6, r);
    for (double eps : {1e-6, 0.1, 2.0}) {
      const Regularization reg = regularize_detailed(h, eps);
      CHECK(reg.hhat == reg.hhat.transpose());
      CHECK_FALSE(reg.clipped);
      Eigen::SelfAdjointEigenSolver<Matrix> eh(h), ef(reg.hhat);
      Vector want = (eh.eigenvalues().array().square() + eps).sqrt();
      std::sort(want.data(), want.data() + want.size());
      CHECK((ef.eigenvalues() - want).cwiseAbs().maxCoeff() < 1e-10);
      CHECK(ef.eigenvalues().minCoeff() >= std::sqrt(eps) * (1.0 - 1e-12));
      // Matches the defining square root (H^T H + eps I)^{1/2}.
      CHECK((reg.hhat * reg.hhat - (h.transpose() * h + eps * Matrix::Identity(6, 6))).norm() < 1e-9 * (1.0 + h.squaredNorm()));
    }
  }
}

TEST_CASE("regularization converges to a PD input as eps shrinks") {
  RandomStream r(3);
  const Matrix h = random_pd(5, r);
  double prev = INFINITY;
  for (double eps : {1e-2, 1e-4, 1e-6}) {
    const double err = (regularize(h, eps) - h).norm();
    CHECK(err < prev);
    prev = err;
  }
  CHECK(prev < 1e-5);
}

TEST_CASE("condition ceiling clips tiny eigenvalues") {
  const Matrix h = Vector((Vector(3) << 1e4, 1.0, 0.0).finished()).asDiagonal();
  const Regularization reg = regularize_detailed(h, 1e-12, 1e6);
  CHECK(reg.clipped);
  CHECK(reg.eigenvalues[0] == doctest::Approx(1e4 / 1e6).epsilon(1e-9));
  CHECK(reg.eigenvalues[2] / reg.eigenvalues[0] <= 1e6 * (1.0 + 1e-9));
  CHECK_FALSE(regularize_detailed(h, 1.0, 1e6).clipped);
}

TEST_CASE("shaping factor closed forms") {
  CHECK((shaping_factor(Matrix::Identity(4, 4)) - Matrix::Identity(4, 4)).norm() < 1e-15);
  const Matrix c = shaping_factor(Vector((Vector(2) << 4, 1).finished()).asDiagonal());
  CHECK(c(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(c(1, 1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(c(0, 1) == 0.0);
  CHECK(c(1, 0) == 0.0);
}

TEST_CASE("shaping factor reconstructs the inverse") {
  RandomStream r(4);
  for (int t = 0; t < 20; ++t) {
    const Matrix h = random_pd(10, r);
    const Matrix c = shaping_factor(h);
    CHECK(spectral_norm(c * c.transpose() * h - Matrix::Identity(10, 10)) < 1e-8);
    CHECK(c.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().cwiseAbs().maxCoeff() == 0.0);
  }
  // Badly scaled but PD.
  const Matrix h = regularize(Vector((Vector(4) << 1e6, 1.0, 1e-3, 1e-6).finished()).asDiagonal(), 1e-12);
  const Matrix c = shaping_factor(h);
  CHECK(spectral_norm(c * c.transpose() * h - Matrix::Identity(4, 4)) < 1e-8);
}

TEST_CASE("shaping factor rejects indefinite input") {
  CHECK_THROWS_AS(shaping_factor(Vector((Vector(2) << 1, -1).finished()).asDiagonal()), NumericalError);
  CHECK_THROWS_AS(shaping_factor(Matrix::Zero(2, 3)), ConfigError);
}

TEST_CASE("tracker starts at the identity and stays consistent") {
  HessianTracker t(3);
  CHECK(t.hbar() == Matrix::Identity(3, 3));
  CHECK(t.hhat() == Matrix::Identity(3, 3));
  CHECK(t.shaping() == Matrix::Identity(3, 3));
  RandomStream r(5);
  for (int k = 0; k < 30; ++k) {
    t.update(random_symmetric(3, r), 1.0 / (k + 2.0));
    t.regularize(1e-3);
    CHECK(t.hbar() == t.hbar().transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> e(t.hhat());
    CHECK(e.eigenvalues().minCoeff() > 0.0);
    CHECK(spectral_norm(t.shaping() * t.shaping().transpose() * t.hhat() - Matrix::Identity(3, 3)) < 1e-8);
  }
  CHECK(t.updates() == 30u);
  CHECK(t.clip_count() == 0u);
}

TEST_CASE("tracker counts clipped regularizations") {
  HessianTracker t(2, 10.0);
  t.update(Vector((Vector(2) << 100, 0).finished()).asDiagonal(), 1.0);
  t.regularize(1e-6);
  CHECK(t.clip_count() == 1u);
}

TEST_CASE("averaged Hessian samples converge to the true Hessian") {
  // Noise-free quadratic, fixed point, Hhat = I sampling: Hbar_K -> H.
  Matrix h(5, 5);
  h << 4, 1, 0, 0, 0,  //
      1, 3, 0.5, 0, 0,  //
      0, 0.5, 2, 0.2, 0,  //
      0, 0, 0.2, 1, 0.1,  //
      0, 0, 0, 0.1, 0.5;
  const ProblemPtr p = make_quadratic(h, NoiseMode::iid, 0.0);
  RandomStream rng(6);
  HessianTracker t(5);
  const NoiseHandle handle(NoiseMode::iid, 0);
  const Vector x = Vector::Constant(5, 0.1);
  std::vector<double> err;
  for (std::size_t k = 0; k < 20000; ++k) {
    const PerturbationDraw d = draw_sfsa(5, rng), dt = draw_sfsa(5, rng);
    const GradientEstimate g = estimate_gradient(*p, x, 0.1, d, handle, rng);
    t.update(sample_hessian(*p, x, 0.1, 0.1, d, dt, handle, rng, g).matrix, 1.0 / (k + 2.0));
    if (k + 1 == 200 || k + 1 == 2000 || k + 1 == 20000) err.push_back(spectral_norm(t.hbar() - h) / spectral_norm(h));
  }
  CAPTURE(err[0]);
  CAPTURE(err[1]);
  CAPTURE(err[2]);
  CHECK(err[1] < err[0]);
  CHECK(err[2] < err[1]);
  CHECK(err[2] < 0.1);
}
