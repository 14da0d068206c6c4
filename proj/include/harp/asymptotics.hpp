#pragma once

#include "harp/perturbation.hpp"
#include "harp/problems.hpp"

#include <string>
#include <vector>

namespace harp {

/// Exact rational for gain exponents, so the indicators [alpha = 1] and
/// [alpha = 6 gamma] never fire on floating-point near-misses.
class Rational {
 public:
  Rational() = default;
  Rational(std::int64_t num, std::int64_t den = 1);

  /// Accepts "p/q", integers and finite decimals such as "0.602".
  static Rational parse(const std::string& text);

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }
  double value() const { return static_cast<double>(num_) / static_cast<double>(den_); }
  std::string str() const;

  friend Rational operator+(const Rational& x, const Rational& y);
  friend Rational operator-(const Rational& x, const Rational& y);
  friend Rational operator*(const Rational& x, const Rational& y);
  friend bool operator==(const Rational& x, const Rational& y) { return x.num_ == y.num_ && x.den_ == y.den_; }

 private:
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

/// Gain exponents and derived quantities of the limit theory.
struct AsymptoticsSpec {
  double a = 1.0;
  double c = 1.0;
  Rational alpha{1};
  Rational gamma{1, 6};

  Rational tau() const { return alpha - Rational(2) * gamma; }
  bool alpha_is_one() const { return alpha == Rational(1); }
  bool alpha_is_six_gamma() const { return alpha == Rational(6) * gamma; }
  double tau_plus() const { return alpha_is_one() ? tau().value() : 0.0; }
  double alpha_plus() const { return alpha_is_one() ? alpha.value() : 0.0; }
};

struct AsymptoticsResult {
  Vector mu;
  Matrix B;
  double tau = 0.0;
};

struct MonteCarloVector {
  Vector value;
  Vector standard_error;
};

struct MonteCarloMatrix {
  Matrix value;
  Matrix standard_error;
};

/// Solves (G - tp I/2) B + B (G - tp I/2) = rhs for symmetric G in the
/// eigenbasis of G. Throws NumericalError naming the offending eigenvalue when
/// G - tp I/2 is not positive definite.
Matrix solve_lyapunov(const Matrix& gamma, double tau_plus, const Matrix& rhs);

/// Solves (G - tp I/2) mu = t.
Vector asymptotic_mean(const Matrix& gamma, double tau_plus, const Vector& t);

/// t = -(a c^2 / 6) [alpha = 6 gamma] E[L3(theta*)(delta, delta, delta) m(delta)]
/// with (delta, m) drawn from `scheme`.
MonteCarloVector compute_bias_vector(const StochasticProblem& problem, const PerturbationScheme& scheme,
                                     const AsymptoticsSpec& spec, std::size_t samples, RandomStream& rng);

/// Same with delta ~ N(0, Sigma^{-1}) and m = Sigma delta.
MonteCarloVector compute_bias_vector(const StochasticProblem& problem, const Matrix& sigma,
                                     const AsymptoticsSpec& spec, std::size_t samples, RandomStream& rng);

/// a^2 var Sigma / (2 c^2).
Matrix iid_covariance_rhs(double a, double c, double variance, const Matrix& sigma);

/// Noise matrix of a CRN problem at theta*: diagonal E||g||^2, off-diagonal
/// E[g_i g_j], with g the noisy gradient. The Lyapunov right side is a^2 times it.
MonteCarloMatrix crn_covariance_rhs(const StochasticProblem& problem, std::size_t samples, RandomStream& rng);

/// (a^2 var / (2 c^2)) sum 1 / (2 a l_i - tp).
double trace_identity_cov(double a, double c, double variance, double tau_plus, const Vector& eigenvalues);
/// (a^2 var / (2 c^2)) sum 1 / (2 a - tp / l_i).
double trace_harp_cov(double a, double c, double variance, double tau_plus, const Vector& eigenvalues);
bool harp_trace_is_smaller(double a, double tau_plus, const Vector& eigenvalues);

struct Complexity {
  double iterations = 0.0;
  double queries = 0.0;
};

/// iterations = ((|mu|^2 + tr B) / eps)^(2 / tau*),
/// queries = 2q ((|mu|^2 + tr(B) / q) / eps)^(2 / tau*).
Complexity complexity(double eps, double tau_star, const Vector& mu, const Matrix& B, int q);

struct RateFit {
  double slope = 0.0;
  double standard_error = 0.0;
  double intercept = 0.0;
  std::size_t points = 0;
  std::size_t window_begin = 0;
  std::size_t window_end = 0;
};

/// Least-squares slope of log(rms) against log(k) over k in [begin, end].
RateFit fit_rate(const std::vector<double>& iterations, const std::vector<double>& rms, std::size_t begin,
                 std::size_t end);

/// Cross-replicate RMS distance to the optimum at each recorded iteration.
std::vector<double> rms_distance(const std::vector<RunRecord>& records);

/// Rate fit over records sharing one iteration grid. The default window is
/// [K/10, K].
RateFit empirical_rate(const std::vector<RunRecord>& records, std::size_t begin = 0, std::size_t end = 0);

/// Sample covariance (divisor R - 1) of K^{tau/2} (theta_K - theta*). Needs R >= 100.
Matrix empirical_scaled_covariance(const std::vector<Vector>& terminals, const Vector& optimum, std::size_t iterations,
                                   double tau);

}  // namespace harp
