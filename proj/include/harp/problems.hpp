#pragma once

#include "harp/core.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>

namespace harp {

/// Binds the queries of one iteration to one noise realization (CRN) or marks
/// them as independent (IID). Under CRN the realization is replayed from the
/// handle's seed, so the same handle always reproduces the same omega.
class NoiseHandle {
 public:
  NoiseHandle(NoiseMode mode, std::uint64_t seed) : mode_(mode), seed_(seed) {}

  /// One handle per iteration; draws the CRN seed from the noise stream.
  static NoiseHandle make(NoiseMode mode, RandomStream& noise_stream) {
    return NoiseHandle(mode, mode == NoiseMode::crn ? noise_stream() : 0);
  }

  NoiseMode mode() const { return mode_; }
  std::uint64_t seed() const { return seed_; }

 private:
  NoiseMode mode_;
  std::uint64_t seed_;
};

/// Noisy zeroth-order oracle l(theta, omega) for L(theta) = E[l(theta, omega)],
/// plus whatever analytic information the problem can provide.
class StochasticProblem {
 public:
  StochasticProblem(Index dimension, NoiseMode mode) : dimension_(dimension), mode_(mode) {}
  virtual ~StochasticProblem() = default;

  Index dimension() const { return dimension_; }
  NoiseMode noise_mode() const { return mode_; }
  const Vector& optimum() const { return optimum_; }

  virtual std::string name() const = 0;
  virtual double loss(const Vector& theta) const = 0;

  /// One ZO query. IID draws omega from `rng`; CRN replays omega from the handle.
  double query(const Vector& theta, const NoiseHandle& handle, RandomStream& rng) const;

  virtual std::optional<Vector> gradient(const Vector&) const { return std::nullopt; }
  virtual std::optional<Matrix> hessian(const Vector&) const { return std::nullopt; }
  /// Third derivative contracted with (u, v, w).
  virtual std::optional<double> third_derivative(const Vector&, const Vector&, const Vector&, const Vector&) const {
    return std::nullopt;
  }
  /// Var[l(theta*, omega)].
  virtual std::optional<double> noise_variance_at_optimum() const { return std::nullopt; }
  /// Gradient of l(theta, .) at one omega drawn from `omega`. CRN problems only.
  virtual std::optional<Vector> sample_noisy_gradient(const Vector&, RandomStream&) const { return std::nullopt; }
  /// (L1, L2) split of the true loss for finite-sum problems.
  virtual std::optional<std::pair<double, double>> loss_components(const Vector&) const { return std::nullopt; }

 protected:
  /// l(theta, omega) with omega drawn from `omega`.
  virtual double observe(const Vector& theta, RandomStream& omega) const = 0;

  void set_optimum(Vector optimum) { optimum_ = std::move(optimum); }
  void check_dimension(const Vector& theta) const;

 private:
  Index dimension_;
  NoiseMode mode_;
  Vector optimum_;
};

using ProblemPtr = std::shared_ptr<const StochasticProblem>;

/// L = theta^T H theta / 2, theta* = 0.
/// IID: l = L + sigma z.  CRN: l = L + sigma z^T theta, z ~ N(0, I), so the
/// noisy gradient is H theta + sigma z.
ProblemPtr make_quadratic(const Matrix& hessian, NoiseMode mode, double sigma);

/// L = y^T y + 0.1 sum y_i^3 + 0.01 sum y_i^4 with y = B theta, B the upper
/// triangular matrix of ones divided by d. theta* = 0. Observation noise is
/// additive N(0, sigma^2), shared by all queries of an iteration under CRN.
ProblemPtr make_skew_quartic(Index dimension, NoiseMode mode, double sigma);

/// Closed-form skew-quartic pieces, shared with tests.
Matrix skew_quartic_matrix(Index dimension);
double skew_quartic(const Vector& theta);

/// One smooth component of a finite sum.
struct Component {
  std::function<double(const Vector&)> loss;
  std::function<Vector(const Vector&)> gradient;
  std::function<Matrix(const Vector&)> hessian;
};

struct SyntheticComponentOptions {
  double curvature_max = 1.0;
  double curvature_min = 1e-2;
  double offset_scale = 1.0;
  double margin_weight = 1.0;
  double margin_sharpness = 4.0;
};

/// Randomized ill-conditioned quadratics plus a softplus margin term:
///   loss_i(theta) = (theta - zeta_i)^T Q (theta - zeta_i) / 2
///                   + (w / s) log(1 + exp(s (v_i^T theta - b_i))).
/// Q has a log-spaced spectrum in a random orthonormal basis shared by all
/// components.
std::vector<Component> synthetic_components(std::size_t count, Index dimension, RandomStream& rng,
                                            const SyntheticComponentOptions& options = {});

/// L = kappa ||theta||^2 + (1/I) sum_i loss_i(theta). A query averages J
/// components drawn uniformly without replacement. theta* is found by Newton's
/// method at construction.
ProblemPtr make_finite_sum(std::vector<Component> components, std::size_t subsample, double kappa, Index dimension,
                           NoiseMode mode);

/// Noise-free problem built from callables, mainly for tests.
ProblemPtr make_function_problem(Index dimension, std::function<double(const Vector&)> loss, Vector optimum,
                                 std::function<Vector(const Vector&)> gradient = {}, std::string name = "function");

}  // namespace harp
