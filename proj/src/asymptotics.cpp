#include "harp/asymptotics.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace harp {

namespace {

Rational reduce(__int128 num, __int128 den) {
  if (den == 0) throw ConfigError("rational with zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  __int128 a = num < 0 ? -num : num, b = den;
  while (b != 0) {
    const __int128 t = a % b;
    a = b;
    b = t;
  }
  if (a > 1) {
    num /= a;
    den /= a;
  }
  constexpr __int128 limit = std::numeric_limits<std::int64_t>::max();
  if (num > limit || -num > limit || den > limit) throw ConfigError("rational overflow");
  return Rational(static_cast<std::int64_t>(num), static_cast<std::int64_t>(den));
}

}  // namespace

Rational::Rational(std::int64_t num, std::int64_t den) {
  if (den == 0) throw ConfigError("rational with zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = std::gcd(num, den);
  num_ = g > 1 ? num / g : num;
  den_ = g > 1 ? den / g : den;
}

Rational Rational::parse(const std::string& raw) {
  std::string text;
  for (char ch : raw) {
    if (!std::isspace(static_cast<unsigned char>(ch))) text += ch;
  }
  if (text.empty()) throw ConfigError("empty rational");
  const auto slash = text.find('/');
  if (slash != std::string::npos) {
    const Rational p = parse(text.substr(0, slash));
    const Rational q = parse(text.substr(slash + 1));
    if (q.num() == 0) throw ConfigError("rational '" + raw + "' divides by zero");
    return reduce(static_cast<__int128>(p.num()) * q.den(), static_cast<__int128>(p.den()) * q.num());
  }
  std::size_t pos = 0;
  bool negative = false;
  if (text[pos] == '+' || text[pos] == '-') negative = text[pos++] == '-';
  __int128 num = 0, den = 1;
  bool seen_digit = false, seen_point = false;
  for (; pos < text.size(); ++pos) {
    const char ch = text[pos];
    if (ch == '.' && !seen_point) {
      seen_point = true;
      continue;
    }
    if (!std::isdigit(static_cast<unsigned char>(ch))) throw ConfigError("cannot parse '" + raw + "' as a rational");
    seen_digit = true;
    num = num * 10 + (ch - '0');
    if (seen_point) den *= 10;
    if (den > static_cast<__int128>(1e18) || num > static_cast<__int128>(1e36))
      throw ConfigError("too many digits in '" + raw + "'");
  }
  if (!seen_digit) throw ConfigError("cannot parse '" + raw + "' as a rational");
  return reduce(negative ? -num : num, den);
}

std::string Rational::str() const {
  return den_ == 1 ? std::to_string(num_) : std::to_string(num_) + "/" + std::to_string(den_);
}

Rational operator+(const Rational& x, const Rational& y) {
  return reduce(static_cast<__int128>(x.num_) * y.den_ + static_cast<__int128>(y.num_) * x.den_,
                static_cast<__int128>(x.den_) * y.den_);
}

Rational operator-(const Rational& x, const Rational& y) { return x + Rational(-y.num_, y.den_); }

Rational operator*(const Rational& x, const Rational& y) {
  return reduce(static_cast<__int128>(x.num_) * y.num_, static_cast<__int128>(x.den_) * y.den_);
}

namespace {

struct ShiftedEigen {
  Vector values;
  Matrix vectors;
};

ShiftedEigen shifted_eigen(const Matrix& gamma, double tau_plus) {
  if (gamma.rows() != gamma.cols() || gamma.rows() < 1) throw ConfigError("Gamma must be square");
  if (!gamma.allFinite() || !std::isfinite(tau_plus)) throw ConfigError("Gamma and tau_plus must be finite");
  const double scale = std::max(1.0, gamma.cwiseAbs().maxCoeff());
  if ((gamma - gamma.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) throw ConfigError("Gamma must be symmetric");
  Matrix shifted = 0.5 * (gamma + gamma.transpose());
  shifted.diagonal().array() -= 0.5 * tau_plus;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(shifted);
  if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition of Gamma failed");
  return {eig.eigenvalues(), eig.eigenvectors()};
}

}  // namespace

Matrix solve_lyapunov(const Matrix& gamma, double tau_plus, const Matrix& rhs) {
  if (rhs.rows() != gamma.rows() || rhs.cols() != gamma.cols()) throw ConfigError("Lyapunov rhs has wrong shape");
  const ShiftedEigen e = shifted_eigen(gamma, tau_plus);
  const double lowest = e.values.minCoeff();
  if (!(lowest > 0.0)) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "unstable Lyapunov system: Gamma - tau_plus I/2 has eigenvalue " << lowest
        << " <= 0 (need every eigenvalue of Gamma above tau_plus/2 = " << 0.5 * tau_plus << ")";
    throw NumericalError(msg.str());
  }
  const Matrix& v = e.vectors;
  Matrix inner = v.transpose() * rhs * v;
  for (Index i = 0; i < inner.rows(); ++i)
    for (Index j = 0; j < inner.cols(); ++j) inner(i, j) /= e.values[i] + e.values[j];
  Matrix b = v * inner * v.transpose();
  if (rhs == rhs.transpose())
    b = (0.5 * (b + b.transpose())).eval();
  return b;
}

Vector asymptotic_mean(const Matrix& gamma, double tau_plus, const Vector& t) {
  if (t.size() != gamma.rows()) throw ConfigError("bias vector has wrong dimension");
  const ShiftedEigen e = shifted_eigen(gamma, tau_plus);
  const double tiny = 1e-300;
  if ((e.values.array().abs() <= tiny).any()) throw NumericalError("mean system is singular");
  return e.vectors * (e.vectors.transpose() * t).cwiseQuotient(e.values);
}

MonteCarloVector compute_bias_vector(const StochasticProblem& problem, const PerturbationScheme& scheme,
                                     const AsymptoticsSpec& spec, std::size_t samples, RandomStream& rng) {
  const Index d = problem.dimension();
  if (scheme.dimension() != d) throw ConfigError("perturbation scheme has wrong dimension");
  MonteCarloVector out{Vector::Zero(d), Vector::Zero(d)};
  if (!spec.alpha_is_six_gamma()) return out;
  const Vector& opt = problem.optimum();
  if (!problem.third_derivative(opt, opt, opt, opt)) throw ConfigError("bias vector needs an analytic third derivative");
  if (samples < 2) throw ConfigError("bias vector needs at least two samples");

  Vector sum = Vector::Zero(d), sum_sq = Vector::Zero(d);
  for (std::size_t s = 0; s < samples; ++s) {
    const PerturbationDraw draw = scheme.draw(rng);
    const double l3 = *problem.third_derivative(opt, draw.delta, draw.delta, draw.delta);
    const Vector term = l3 * draw.mapped;
    sum += term;
    sum_sq += term.cwiseProduct(term);
  }
  const double n = static_cast<double>(samples);
  const Vector mean = sum / n;
  const Vector var = ((sum_sq / n - mean.cwiseProduct(mean)) * (n / (n - 1.0))).cwiseMax(0.0);
  const double factor = -spec.a * spec.c * spec.c / 6.0;
  out.value = factor * mean;
  out.standard_error = std::abs(factor) * (var / n).cwiseSqrt();
  return out;
}

MonteCarloVector compute_bias_vector(const StochasticProblem& problem, const Matrix& sigma,
                                     const AsymptoticsSpec& spec, std::size_t samples, RandomStream& rng) {
  return compute_bias_vector(problem, PerturbationScheme::shaped(sigma), spec, samples, rng);
}

Matrix iid_covariance_rhs(double a, double c, double variance, const Matrix& sigma) {
  if (!(c > 0.0)) throw ConfigError("c must be positive");
  if (!(variance >= 0.0)) throw ConfigError("noise variance must be nonnegative");
  return (a * a * variance / (2.0 * c * c)) * sigma;
}

MonteCarloMatrix crn_covariance_rhs(const StochasticProblem& problem, std::size_t samples, RandomStream& rng) {
  if (problem.noise_mode() != NoiseMode::crn) throw ConfigError("noise matrix needs a CRN problem");
  if (samples < 2) throw ConfigError("noise matrix needs at least two samples");
  const Index d = problem.dimension();
  const Vector& opt = problem.optimum();
  Matrix sum = Matrix::Zero(d, d), sum_sq = Matrix::Zero(d, d);
  for (std::size_t s = 0; s < samples; ++s) {
    RandomStream omega(rng());
    const auto g = problem.sample_noisy_gradient(opt, omega);
    if (!g) throw ConfigError("problem cannot sample noisy gradients");
    Matrix term = *g * g->transpose();
    term.diagonal().setConstant(g->squaredNorm());
    sum += term;
    sum_sq += term.cwiseProduct(term);
  }
  const double n = static_cast<double>(samples);
  MonteCarloMatrix out;
  out.value = sum / n;
  const Matrix var = ((sum_sq / n - out.value.cwiseProduct(out.value)) * (n / (n - 1.0))).cwiseMax(0.0);
  out.standard_error = (var / n).cwiseSqrt();
  return out;
}

namespace {

void check_trace_inputs(double c, double variance, const Vector& eigenvalues) {
  if (!(c > 0.0)) throw ConfigError("c must be positive");
  if (!(variance >= 0.0)) throw ConfigError("noise variance must be nonnegative");
  if (eigenvalues.size() < 1 || !(eigenvalues.minCoeff() > 0.0)) throw ConfigError("eigenvalues must be positive");
}

std::string threshold_message(double a, double tau_plus, double lambda_min) {
  std::ostringstream msg;
  msg.precision(17);
  msg << "unstable gains: a = " << a << " must exceed tau_plus / (2 lambda_min) = " << tau_plus / (2.0 * lambda_min);
  return msg.str();
}

}  // namespace

double trace_identity_cov(double a, double c, double variance, double tau_plus, const Vector& eigenvalues) {
  check_trace_inputs(c, variance, eigenvalues);
  const double lmin = eigenvalues.minCoeff();
  if (!(2.0 * a * lmin - tau_plus > 0.0)) throw NumericalError(threshold_message(a, tau_plus, lmin));
  const double sum = (1.0 / (2.0 * a * eigenvalues.array() - tau_plus)).sum();
  return a * a * variance / (2.0 * c * c) * sum;
}

double trace_harp_cov(double a, double c, double variance, double tau_plus, const Vector& eigenvalues) {
  check_trace_inputs(c, variance, eigenvalues);
  const double lmin = eigenvalues.minCoeff();
  if (!(2.0 * a - tau_plus / lmin > 0.0)) throw NumericalError(threshold_message(a, tau_plus, lmin));
  const double sum = (1.0 / (2.0 * a - tau_plus / eigenvalues.array())).sum();
  return a * a * variance / (2.0 * c * c) * sum;
}

bool harp_trace_is_smaller(double a, double tau_plus, const Vector& eigenvalues) {
  return trace_harp_cov(a, 1.0, 2.0, tau_plus, eigenvalues) < trace_identity_cov(a, 1.0, 2.0, tau_plus, eigenvalues);
}

Complexity complexity(double eps, double tau_star, const Vector& mu, const Matrix& B, int q) {
  if (!(eps > 0.0)) throw ConfigError("target accuracy must be positive");
  if (!(tau_star > 0.0)) throw ConfigError("rate exponent must be positive");
  if (q < 1) throw ConfigError("queries per estimate must be positive");
  const double power = 2.0 / tau_star;
  const double mu2 = mu.squaredNorm();
  const double tr = B.trace();
  Complexity out;
  out.iterations = std::pow((mu2 + tr) / eps, power);
  out.queries = 2.0 * q * std::pow((mu2 + tr / q) / eps, power);
  return out;
}

RateFit fit_rate(const std::vector<double>& iterations, const std::vector<double>& rms, std::size_t begin,
                 std::size_t end) {
  if (iterations.size() != rms.size()) throw ConfigError("rate fit: iteration and RMS columns differ in length");
  if (begin < 1 || end < begin) throw ConfigError("rate fit window must satisfy 1 <= begin <= end");
  std::vector<double> x, y;
  for (std::size_t i = 0; i < iterations.size(); ++i) {
    const double k = iterations[i];
    if (k < static_cast<double>(begin) || k > static_cast<double>(end)) continue;
    if (!(rms[i] > 0.0) || !std::isfinite(rms[i])) continue;
    x.push_back(std::log(k));
    y.push_back(std::log(rms[i]));
  }
  if (x.size() < 2) throw ConfigError("rate fit window holds fewer than two usable points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw ConfigError("rate fit window spans a single iteration");
  RateFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.points = x.size();
  fit.window_begin = begin;
  fit.window_end = end;
  if (x.size() > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = y[i] - fit.intercept - fit.slope * x[i];
      rss += r * r;
    }
    fit.standard_error = std::sqrt(rss / (n - 2.0) / sxx);
  }
  return fit;
}

std::vector<double> rms_distance(const std::vector<RunRecord>& records) {
  if (records.empty()) throw ConfigError("no records");
  const std::size_t n = records.front().size();
  std::vector<double> out(n, 0.0);
  for (const auto& r : records) {
    if (r.size() != n || r.iteration != records.front().iteration)
      throw ConfigError("records do not share one iteration grid");
    for (std::size_t i = 0; i < n; ++i) out[i] += r.distance[i] * r.distance[i];
  }
  for (double& v : out) v = std::sqrt(v / static_cast<double>(records.size()));
  return out;
}

RateFit empirical_rate(const std::vector<RunRecord>& records, std::size_t begin, std::size_t end) {
  if (records.size() < 2) throw ConfigError("rate fit needs at least two replicates");
  const std::vector<double> rms = rms_distance(records);
  const auto& grid = records.front().iteration;
  const std::size_t last = grid.back();
  if (end == 0) end = last;
  if (begin == 0) begin = std::max<std::size_t>(1, last / 10);
  std::vector<double> k(grid.begin(), grid.end());
  return fit_rate(k, rms, begin, end);
}

Matrix empirical_scaled_covariance(const std::vector<Vector>& terminals, const Vector& optimum, std::size_t iterations,
                                   double tau) {
  if (terminals.size() < 100) throw ConfigError("scaled covariance needs at least 100 replicates");
  const Index d = optimum.size();
  const double scale = std::pow(static_cast<double>(iterations), 0.5 * tau);
  Matrix samples(static_cast<Index>(terminals.size()), d);
  for (std::size_t r = 0; r < terminals.size(); ++r) {
    if (terminals[r].size() != d) throw ConfigError("terminal iterate has wrong dimension");
    samples.row(static_cast<Index>(r)) = (scale * (terminals[r] - optimum)).transpose();
  }
  const Eigen::RowVectorXd mean = samples.colwise().mean();
  samples.rowwise() -= mean;
  Matrix cov = samples.transpose() * samples / static_cast<double>(terminals.size() - 1);
  return 0.5 * (cov + cov.transpose());
}

}  // namespace harp
