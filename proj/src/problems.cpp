#include "harp/problems.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace harp {

double StochasticProblem::query(const Vector& theta, const NoiseHandle& handle, RandomStream& rng) const {
  check_dimension(theta);
  if (handle.mode() != mode_) throw ConfigError("noise handle mode does not match the problem's noise mode");
  if (mode_ == NoiseMode::crn) {
    RandomStream omega(handle.seed());
    return observe(theta, omega);
  }
  return observe(theta, rng);
}

void StochasticProblem::check_dimension(const Vector& theta) const {
  if (theta.size() != dimension_)
    throw ConfigError("expected a " + std::to_string(dimension_) + "-vector, got size " + std::to_string(theta.size()));
}

namespace {

class QuadraticProblem final : public StochasticProblem {
 public:
  QuadraticProblem(const Matrix& h, NoiseMode mode, double sigma)
      : StochasticProblem(h.rows(), mode), h_(h), sigma_(sigma) {
    set_optimum(Vector::Zero(h.rows()));
  }

  std::string name() const override { return "quadratic"; }
  double loss(const Vector& theta) const override { return 0.5 * theta.dot(h_ * theta); }
  std::optional<Vector> gradient(const Vector& theta) const override { return Vector(h_ * theta); }
  std::optional<Matrix> hessian(const Vector&) const override { return h_; }
  std::optional<double> third_derivative(const Vector&, const Vector&, const Vector&, const Vector&) const override {
    return 0.0;
  }
  std::optional<double> noise_variance_at_optimum() const override {
    // Additive CRN noise z^T theta vanishes at theta* = 0.
    return noise_mode() == NoiseMode::iid ? sigma_ * sigma_ : 0.0;
  }
  std::optional<Vector> sample_noisy_gradient(const Vector& theta, RandomStream& omega) const override {
    if (noise_mode() != NoiseMode::crn) return std::nullopt;
    check_dimension(theta);
    Vector g = h_ * theta;
    if (sigma_ != 0.0) g += sigma_ * omega.normal_vector(dimension());
    return g;
  }

 protected:
  double observe(const Vector& theta, RandomStream& omega) const override {
    const double value = loss(theta);
    if (sigma_ == 0.0) return value;
    if (noise_mode() == NoiseMode::iid) return value + sigma_ * omega.normal();
    double noise = 0.0;
    for (Index i = 0; i < theta.size(); ++i) noise += omega.normal() * theta[i];
    return value + sigma_ * noise;
  }

 private:
  Matrix h_;
  double sigma_;
};

class SkewQuarticProblem final : public StochasticProblem {
 public:
  SkewQuarticProblem(Index d, NoiseMode mode, double sigma)
      : StochasticProblem(d, mode), b_(skew_quartic_matrix(d)), sigma_(sigma) {
    set_optimum(Vector::Zero(d));
  }

  std::string name() const override { return "skew_quartic"; }

  double loss(const Vector& theta) const override {
    check_dimension(theta);
    const Vector y = b_ * theta;
    return y.squaredNorm() + 0.1 * y.array().cube().sum() + 0.01 * y.array().square().square().sum();
  }

  std::optional<Vector> gradient(const Vector& theta) const override {
    check_dimension(theta);
    const Eigen::ArrayXd y = (b_ * theta).array();
    const Vector dy = (2.0 * y + 0.3 * y.square() + 0.04 * y.cube()).matrix();
    return Vector(b_.transpose() * dy);
  }

  std::optional<Matrix> hessian(const Vector& theta) const override {
    check_dimension(theta);
    const Eigen::ArrayXd y = (b_ * theta).array();
    const Vector curvature = (2.0 + 0.6 * y + 0.12 * y.square()).matrix();
    Matrix h = b_.transpose() * curvature.asDiagonal() * b_;
    return Matrix(0.5 * (h + h.transpose()));
  }

  std::optional<double> third_derivative(const Vector& theta, const Vector& u, const Vector& v,
                                         const Vector& w) const override {
    check_dimension(theta);
    const Eigen::ArrayXd y = (b_ * theta).array();
    const Eigen::ArrayXd bu = (b_ * u).array(), bv = (b_ * v).array(), bw = (b_ * w).array();
    return ((0.6 + 0.24 * y) * bu * bv * bw).sum();
  }

  std::optional<double> noise_variance_at_optimum() const override {
    return noise_mode() == NoiseMode::iid ? sigma_ * sigma_ : 0.0;
  }

  std::optional<Vector> sample_noisy_gradient(const Vector& theta, RandomStream&) const override {
    if (noise_mode() != NoiseMode::crn) return std::nullopt;
    return gradient(theta);
  }

 protected:
  double observe(const Vector& theta, RandomStream& omega) const override {
    const double value = loss(theta);
    return sigma_ == 0.0 ? value : value + sigma_ * omega.normal();
  }

 private:
  Matrix b_;
  double sigma_;
};

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

class FiniteSumProblem final : public StochasticProblem {
 public:
  FiniteSumProblem(std::vector<Component> components, std::size_t subsample, double kappa, Index d, NoiseMode mode)
      : StochasticProblem(d, mode), components_(std::move(components)), subsample_(subsample), kappa_(kappa) {
    if (components_.empty()) throw ConfigError("finite sum needs at least one component");
    if (subsample_ < 1 || subsample_ > components_.size())
      throw ConfigError("finite sum subsample size J must satisfy 1 <= J <= I");
    if (!(kappa_ >= 0.0)) throw ConfigError("finite sum kappa must be nonnegative");
    for (const auto& c : components_) {
      if (!c.loss || !c.gradient || !c.hessian) throw ConfigError("finite sum components need loss, gradient and hessian");
    }
    set_optimum(newton_minimize());
  }

  std::string name() const override { return "finite_sum"; }

  double loss(const Vector& theta) const override {
    check_dimension(theta);
    double sum = 0.0;
    for (const auto& c : components_) sum += c.loss(theta);
    return kappa_ * theta.squaredNorm() + sum / static_cast<double>(components_.size());
  }

  std::optional<std::pair<double, double>> loss_components(const Vector& theta) const override {
    check_dimension(theta);
    double sum = 0.0;
    for (const auto& c : components_) sum += c.loss(theta);
    return std::make_pair(kappa_ * theta.squaredNorm(), sum / static_cast<double>(components_.size()));
  }

  std::optional<Vector> gradient(const Vector& theta) const override {
    check_dimension(theta);
    Vector g = Vector::Zero(theta.size());
    for (const auto& c : components_) g += c.gradient(theta);
    return Vector(2.0 * kappa_ * theta + g / static_cast<double>(components_.size()));
  }

  std::optional<Matrix> hessian(const Vector& theta) const override {
    check_dimension(theta);
    Matrix h = Matrix::Zero(theta.size(), theta.size());
    for (const auto& c : components_) h += c.hessian(theta);
    h /= static_cast<double>(components_.size());
    h.diagonal().array() += 2.0 * kappa_;
    return Matrix(0.5 * (h + h.transpose()));
  }

  std::optional<double> noise_variance_at_optimum() const override {
    // Variance of a without-replacement sample mean of component losses.
    const std::size_t n = components_.size();
    if (subsample_ == n) return 0.0;
    Eigen::ArrayXd values(static_cast<Index>(n));
    for (std::size_t i = 0; i < n; ++i) values[static_cast<Index>(i)] = components_[i].loss(optimum());
    const double population = (values - values.mean()).square().mean();
    const double j = static_cast<double>(subsample_), total = static_cast<double>(n);
    return population / j * (total - j) / (total - 1.0);
  }

  std::optional<Vector> sample_noisy_gradient(const Vector& theta, RandomStream& omega) const override {
    if (noise_mode() != NoiseMode::crn) return std::nullopt;
    check_dimension(theta);
    Vector g = Vector::Zero(theta.size());
    for (std::size_t i : draw_subset(omega)) g += components_[i].gradient(theta);
    return Vector(2.0 * kappa_ * theta + g / static_cast<double>(subsample_));
  }

 protected:
  double observe(const Vector& theta, RandomStream& omega) const override {
    double sum = 0.0;
    for (std::size_t i : draw_subset(omega)) sum += components_[i].loss(theta);
    return kappa_ * theta.squaredNorm() + sum / static_cast<double>(subsample_);
  }

 private:
  std::vector<std::size_t> draw_subset(RandomStream& omega) const {
    const std::size_t n = components_.size();
    if (subsample_ == n) {
      std::vector<std::size_t> all(n);
      std::iota(all.begin(), all.end(), std::size_t{0});
      return all;
    }
    // Partial Fisher-Yates over a scratch index list.
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t j = 0; j < subsample_; ++j) {
      const std::size_t pick = j + omega.index(n - j);
      std::swap(pool[j], pool[pick]);
    }
    pool.resize(subsample_);
    return pool;
  }

  Vector newton_minimize() const {
    Vector theta = Vector::Zero(dimension());
    double value = loss(theta);
    for (int iter = 0; iter < 200; ++iter) {
      const Vector g = *gradient(theta);
      if (g.norm() < 1e-13 * std::max(1.0, std::abs(value))) break;
      const Matrix h = *hessian(theta);
      Eigen::LDLT<Matrix> ldlt(h);
      Vector step = ldlt.solve(g);
      if (ldlt.info() != Eigen::Success || !step.allFinite() || step.dot(g) <= 0.0) step = g;
      double t = 1.0;
      Vector candidate = theta - step;
      double cand_value = loss(candidate);
      while (cand_value > value - 1e-4 * t * step.dot(g) && t > 1e-12) {
        t *= 0.5;
        candidate = theta - t * step;
        cand_value = loss(candidate);
      }
      if (t <= 1e-12) break;
      theta = candidate;
      value = cand_value;
    }
    return theta;
  }

  std::vector<Component> components_;
  std::size_t subsample_;
  double kappa_;
};

class FunctionProblem final : public StochasticProblem {
 public:
  FunctionProblem(Index d, std::function<double(const Vector&)> loss, Vector optimum,
                  std::function<Vector(const Vector&)> gradient, std::string name)
      : StochasticProblem(d, NoiseMode::iid), loss_(std::move(loss)), gradient_(std::move(gradient)),
        name_(std::move(name)) {
    if (optimum.size() != d) throw ConfigError("optimum has wrong dimension");
    set_optimum(std::move(optimum));
  }

  std::string name() const override { return name_; }
  double loss(const Vector& theta) const override { return loss_(theta); }
  std::optional<Vector> gradient(const Vector& theta) const override {
    if (!gradient_) return std::nullopt;
    return gradient_(theta);
  }
  std::optional<double> noise_variance_at_optimum() const override { return 0.0; }

 protected:
  double observe(const Vector& theta, RandomStream&) const override { return loss_(theta); }

 private:
  std::function<double(const Vector&)> loss_;
  std::function<Vector(const Vector&)> gradient_;
  std::string name_;
};

}  // namespace

ProblemPtr make_quadratic(const Matrix& hessian, NoiseMode mode, double sigma) {
  if (hessian.rows() != hessian.cols() || hessian.rows() < 1) throw ConfigError("quadratic Hessian must be square");
  if (!(sigma >= 0.0)) throw ConfigError("noise sigma must be nonnegative");
  if (!hessian.isApprox(hessian.transpose(), 0.0) && (hessian - hessian.transpose()).cwiseAbs().maxCoeff() > 0.0)
    throw ConfigError("quadratic Hessian must be symmetric");
  Eigen::LLT<Matrix> llt(hessian);
  if (llt.info() != Eigen::Success) throw ConfigError("quadratic Hessian must be positive definite");
  return std::make_shared<QuadraticProblem>(hessian, mode, sigma);
}

Matrix skew_quartic_matrix(Index dimension) {
  if (dimension < 1) throw ConfigError("dimension must be at least 1");
  Matrix b = Matrix::Zero(dimension, dimension);
  b.triangularView<Eigen::Upper>().setConstant(1.0 / static_cast<double>(dimension));
  return b;
}

double skew_quartic(const Vector& theta) {
  const Vector y = skew_quartic_matrix(theta.size()) * theta;
  return y.squaredNorm() + 0.1 * y.array().cube().sum() + 0.01 * y.array().square().square().sum();
}

ProblemPtr make_skew_quartic(Index dimension, NoiseMode mode, double sigma) {
  if (!(sigma >= 0.0)) throw ConfigError("noise sigma must be nonnegative");
  return std::make_shared<SkewQuarticProblem>(dimension, mode, sigma);
}

std::vector<Component> synthetic_components(std::size_t count, Index dimension, RandomStream& rng,
                                            const SyntheticComponentOptions& options) {
  if (count < 1 || dimension < 1) throw ConfigError("synthetic finite sum needs count >= 1 and dimension >= 1");
  if (!(options.curvature_max >= options.curvature_min && options.curvature_min > 0.0))
    throw ConfigError("synthetic curvature range must satisfy 0 < min <= max");

  Matrix gaussian(dimension, dimension);
  for (Index j = 0; j < dimension; ++j) gaussian.col(j) = rng.normal_vector(dimension);
  Eigen::HouseholderQR<Matrix> qr(gaussian);
  const Matrix basis = qr.householderQ() * Matrix::Identity(dimension, dimension);
  Vector spectrum(dimension);
  for (Index i = 0; i < dimension; ++i) {
    const double t = dimension == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(dimension - 1);
    spectrum[i] = options.curvature_max * std::pow(options.curvature_min / options.curvature_max, t);
  }
  Matrix q = basis * spectrum.asDiagonal() * basis.transpose();
  q = (0.5 * (q + q.transpose())).eval();
  auto shared_q = std::make_shared<const Matrix>(std::move(q));

  const double weight = options.margin_weight;
  const double sharpness = options.margin_sharpness;
  std::vector<Component> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Vector zeta = options.offset_scale * rng.normal_vector(dimension);
    Vector dir = rng.normal_vector(dimension);
    dir /= dir.norm();
    const double bias = rng.normal();
    Component c;
    c.loss = [shared_q, zeta, dir, bias, weight, sharpness](const Vector& theta) {
      const Vector r = theta - zeta;
      return 0.5 * r.dot(*shared_q * r) + weight / sharpness * softplus(sharpness * (dir.dot(theta) - bias));
    };
    c.gradient = [shared_q, zeta, dir, bias, weight, sharpness](const Vector& theta) {
      return Vector(*shared_q * (theta - zeta) + weight * logistic(sharpness * (dir.dot(theta) - bias)) * dir);
    };
    c.hessian = [shared_q, dir, bias, weight, sharpness](const Vector& theta) {
      const double p = logistic(sharpness * (dir.dot(theta) - bias));
      return Matrix(*shared_q + weight * sharpness * p * (1.0 - p) * dir * dir.transpose());
    };
    out.push_back(std::move(c));
  }
  return out;
}

ProblemPtr make_finite_sum(std::vector<Component> components, std::size_t subsample, double kappa, Index dimension,
                           NoiseMode mode) {
  return std::make_shared<FiniteSumProblem>(std::move(components), subsample, kappa, dimension, mode);
}

ProblemPtr make_function_problem(Index dimension, std::function<double(const Vector&)> loss, Vector optimum,
                                 std::function<Vector(const Vector&)> gradient, std::string name) {
  if (!loss) throw ConfigError("function problem needs a loss");
  return std::make_shared<FunctionProblem>(dimension, std::move(loss), std::move(optimum), std::move(gradient),
                                           std::move(name));
}

}  // namespace harp
