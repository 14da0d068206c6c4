#include "harp/problems.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace harp;
using harp::test::fd_gradient;
using harp::test::fd_hessian;

namespace {

Matrix diag2(double a, double b) { return Vector((Vector(2) << a, b).finished()).asDiagonal(); }

// Mean and variance of repeated noisy queries at a fixed point.
std::pair<double, double> query_stats(const StochasticProblem& p, const Vector& x, int n, std::uint64_t seed) {
  RandomStream noise(seed);
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const NoiseHandle h = NoiseHandle::make(p.noise_mode(), noise);
    const double v = p.query(x, h, noise);
    s += v;
    s2 += v * v;
  }
  const double mean = s / n;
  return {mean, (s2 / n - mean * mean) * n / (n - 1.0)};
}

void check_derivatives(const StochasticProblem& p, std::uint64_t seed, double scale) {
  RandomStream r(seed);
  const auto f = [&](const Vector& x) { return p.loss(x); };
  const auto g = [&](const Vector& x) { return *p.gradient(x); };
  for (int i = 0; i < 20; ++i) {
    const Vector x = scale * r.normal_vector(p.dimension());
    const Vector ga = *p.gradient(x);
    const Vector gf = fd_gradient(f, x, 1e-5);
    CHECK((ga - gf).norm() <= 1e-4 * std::max(1.0, ga.norm()));
    const Matrix ha = *p.hessian(x);
    const Matrix hf = fd_hessian(g, x, 1e-5);
    CHECK((ha - hf).norm() <= 1e-4 * std::max(1.0, ha.norm()));
  }
}

}  // namespace

TEST_CASE("quadratic loss") {
  const ProblemPtr p = make_quadratic(diag2(100, 1), NoiseMode::iid, 0.0);
  CHECK(p->loss(Vector::Ones(2)) == 50.5);
  CHECK(p->optimum() == Vector::Zero(2));
  CHECK(p->gradient(p->optimum())->norm() == 0.0);
}

TEST_CASE("quadratic rejects non-PD Hessians") {
  CHECK_THROWS_AS(make_quadratic(diag2(1, -1), NoiseMode::iid, 1.0), ConfigError);
  CHECK_THROWS_AS(make_quadratic((Matrix(2, 2) << 1, 2, 0, 1).finished(), NoiseMode::iid, 1.0), ConfigError);
}

TEST_CASE("quadratic IID noise has variance sigma^2") {
  const double sigma = 1.5;
  const ProblemPtr p = make_quadratic(diag2(2, 1), NoiseMode::iid, sigma);
  const Vector x = (Vector(2) << 0.3, -0.7).finished();
  const auto [mean, var] = query_stats(*p, x, 100000, 1);
  CHECK(var == doctest::Approx(sigma * sigma).epsilon(0.05));
  CHECK(std::abs(mean - p->loss(x)) < 3.0 * sigma / std::sqrt(100000.0));
  CHECK(*p->noise_variance_at_optimum() == sigma * sigma);
}

TEST_CASE("quadratic CRN noisy gradient at the optimum is omega") {
  const double sigma = 0.7;
  const ProblemPtr p = make_quadratic(Matrix::Identity(3, 3) * 2.0, NoiseMode::crn, sigma);
  RandomStream a(5), b(5);
  const Vector g = *p->sample_noisy_gradient(p->optimum(), a);
  CHECK((g - sigma * b.normal_vector(3)).norm() < 1e-15);
}

TEST_CASE("quadratic CRN gradient matches finite differences of the realized loss") {
  const Matrix h = (Matrix(2, 2) << 2, 1, 1, 3).finished();
  const ProblemPtr p = make_quadratic(h, NoiseMode::crn, 1.0);
  const NoiseHandle handle(NoiseMode::crn, 12345);
  RandomStream unused(0);
  const Vector x = (Vector(2) << 0.4, -1.1).finished();
  const auto realized = [&](const Vector& t) { return p->query(t, handle, unused); };
  RandomStream omega(12345);
  const Vector g = *p->sample_noisy_gradient(x, omega);
  CHECK((fd_gradient(realized, x, 1e-5) - g).norm() < 1e-6);
}

TEST_CASE("CRN handle replays the same realization") {
  const ProblemPtr p = make_skew_quartic(4, NoiseMode::crn, 1.0);
  RandomStream noise(8), rng(9);
  const NoiseHandle h = NoiseHandle::make(NoiseMode::crn, noise);
  const Vector x = Vector::Constant(4, 0.5);
  const Vector y = Vector::Constant(4, -0.25);
  const double first = p->query(x, h, rng);
  CHECK(p->query(x, h, rng) == first);
  // Additive shared noise: the difference of two queries equals the true difference.
  CHECK(p->query(x, h, rng) - p->query(y, h, rng) == doctest::Approx(p->loss(x) - p->loss(y)).epsilon(1e-12));
  const NoiseHandle other = NoiseHandle::make(NoiseMode::crn, noise);
  CHECK(p->query(x, other, rng) != first);
}

TEST_CASE("IID queries draw fresh noise") {
  const ProblemPtr p = make_skew_quartic(3, NoiseMode::iid, 1.0);
  RandomStream rng(4);
  const NoiseHandle h(NoiseMode::iid, 0);
  const Vector x = Vector::Zero(3);
  CHECK(p->query(x, h, rng) != p->query(x, h, rng));
}

TEST_CASE("query rejects handles of the other mode") {
  const ProblemPtr p = make_skew_quartic(3, NoiseMode::iid, 1.0);
  RandomStream rng(4);
  CHECK_THROWS_AS(p->query(Vector::Zero(3), NoiseHandle(NoiseMode::crn, 1), rng), ConfigError);
  CHECK_THROWS_AS(p->query(Vector::Zero(2), NoiseHandle(NoiseMode::iid, 0), rng), ConfigError);
}

TEST_CASE("skew-quartic hand values") {
  CHECK(skew_quartic(Vector::Zero(5)) == 0.0);
  CHECK(skew_quartic(Vector::Ones(2)) == doctest::Approx(1.373125).epsilon(1e-15));
  const ProblemPtr p = make_skew_quartic(2, NoiseMode::iid, 0.0);
  CHECK(p->loss(Vector::Ones(2)) == doctest::Approx(1.373125).epsilon(1e-15));
  CHECK(p->gradient(Vector::Zero(2))->norm() == 0.0);
}

TEST_CASE("skew-quartic Hessian at the optimum has one dominant eigenvalue") {
  const Index d = 20;
  const ProblemPtr p = make_skew_quartic(d, NoiseMode::iid, 1.0);
  const Matrix b = skew_quartic_matrix(d);
  const Matrix h = *p->hessian(Vector::Zero(d));
  CHECK((h - 2.0 * b.transpose() * b).norm() < 1e-14);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(h);
  const Vector l = eig.eigenvalues();
  CHECK(l[d - 1] > 0.8);
  CHECK(l[d - 1] > 8.0 * l[d - 2]);
  CHECK(l[0] < 0.002);
}

TEST_CASE("skew-quartic gradient matches central differences") {
  const ProblemPtr p = make_skew_quartic(6, NoiseMode::iid, 0.0);
  RandomStream r(17);
  for (int i = 0; i < 20; ++i) {
    const Vector x = 2.0 * r.normal_vector(6);
    const Vector ga = *p->gradient(x);
    const Vector gf = fd_gradient([&](const Vector& t) { return p->loss(t); }, x, 1e-6);
    CHECK((ga - gf).norm() <= 1e-5 * ga.norm());
  }
}

TEST_CASE("skew-quartic third derivative matches differences of the Hessian") {
  const ProblemPtr p = make_skew_quartic(4, NoiseMode::iid, 0.0);
  RandomStream r(18);
  for (int i = 0; i < 10; ++i) {
    const Vector x = r.normal_vector(4), u = r.normal_vector(4), v = r.normal_vector(4), w = r.normal_vector(4);
    const double h = 1e-5;
    const double fd = (v.dot(*p->hessian(x + h * u) * w) - v.dot(*p->hessian(x - h * u) * w)) / (2.0 * h);
    CHECK(*p->third_derivative(x, u, v, w) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("analytic derivatives match finite differences on every problem") {
  check_derivatives(*make_quadratic((Matrix(2, 2) << 2, 1, 1, 3).finished(), NoiseMode::iid, 1.0), 1, 1.0);
  check_derivatives(*make_skew_quartic(5, NoiseMode::iid, 1.0), 2, 2.0);
  RandomStream r(3);
  check_derivatives(*make_finite_sum(synthetic_components(12, 4, r), 3, 0.1, 4, NoiseMode::iid), 4, 1.0);
}

TEST_CASE("finite sum: full batch is noise free") {
  RandomStream r(21);
  const ProblemPtr p = make_finite_sum(synthetic_components(10, 3, r), 10, 0.1, 3, NoiseMode::iid);
  RandomStream noise(1);
  const Vector x = (Vector(3) << 0.5, -0.2, 1.0).finished();
  for (int i = 0; i < 5; ++i) CHECK(p->query(x, NoiseHandle(NoiseMode::iid, 0), noise) == doctest::Approx(p->loss(x)).epsilon(1e-14));
  CHECK(*p->noise_variance_at_optimum() == 0.0);
}

TEST_CASE("finite sum: regularization term") {
  RandomStream r(22);
  auto comps = synthetic_components(5, 3, r);
  const ProblemPtr with = make_finite_sum(comps, 5, 0.1, 3, NoiseMode::iid);
  const ProblemPtr without = make_finite_sum(comps, 5, 0.0, 3, NoiseMode::iid);
  const Vector x = (Vector(3) << 1.0, 2.0, -2.0).finished();
  CHECK(with->loss(x) - without->loss(x) == doctest::Approx(0.1 * x.squaredNorm()).epsilon(1e-12));
  const auto parts = *with->loss_components(x);
  CHECK(parts.first == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(parts.first + parts.second == doctest::Approx(with->loss(x)).epsilon(1e-14));
}

TEST_CASE("finite sum: subsampled queries are unbiased") {
  RandomStream r(23);
  const ProblemPtr p = make_finite_sum(synthetic_components(10, 3, r), 2, 0.1, 3, NoiseMode::iid);
  const Vector x = (Vector(3) << 0.3, 0.1, -0.4).finished();
  const int n = 100000;
  const auto [mean, var] = query_stats(*p, x, n, 2);
  CHECK(std::abs(mean - p->loss(x)) < 3.0 * std::sqrt(var / n));
}

TEST_CASE("finite sum: noise variance at the optimum matches simulation") {
  RandomStream r(24);
  const ProblemPtr p = make_finite_sum(synthetic_components(10, 3, r), 3, 0.1, 3, NoiseMode::iid);
  const auto [mean, var] = query_stats(*p, p->optimum(), 100000, 3);
  CHECK(var == doctest::Approx(*p->noise_variance_at_optimum()).epsilon(0.05));
}

TEST_CASE("finite sum: optimum is stationary") {
  RandomStream r(25);
  const ProblemPtr p = make_finite_sum(synthetic_components(100, 8, r), 1, 0.1, 8, NoiseMode::crn);
  CHECK(p->gradient(p->optimum())->norm() < 1e-10);
}

TEST_CASE("finite sum: CRN noisy gradient averages to the true gradient") {
  RandomStream r(26);
  const ProblemPtr p = make_finite_sum(synthetic_components(6, 2, r), 2, 0.1, 2, NoiseMode::crn);
  const Vector x = (Vector(2) << 0.5, -0.5).finished();
  RandomStream omega_seed(1);
  Vector sum = Vector::Zero(2);
  const int n = 60000;
  for (int i = 0; i < n; ++i) {
    RandomStream omega(omega_seed());
    sum += *p->sample_noisy_gradient(x, omega);
  }
  CHECK((sum / n - *p->gradient(x)).norm() < 0.02);
}

TEST_CASE("finite sum rejects J > I") {
  RandomStream r(27);
  CHECK_THROWS_AS(make_finite_sum(synthetic_components(4, 2, r), 5, 0.1, 2, NoiseMode::iid), ConfigError);
}

TEST_CASE("function problem") {
  const ProblemPtr p = make_function_problem(
      2, [](const Vector& x) { return x.squaredNorm(); }, Vector::Zero(2), [](const Vector& x) { return Vector(2.0 * x); });
  RandomStream r(1);
  CHECK(p->query(Vector::Ones(2), NoiseHandle(NoiseMode::iid, 0), r) == 2.0);
  CHECK(*p->gradient(Vector::Ones(2)) == Vector::Constant(2, 2.0));
}
