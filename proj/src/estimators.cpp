#include "harp/estimators.hpp"

#include <cmath>

namespace harp {

namespace {

double checked_query(const StochasticProblem& problem, const Vector& theta, const NoiseHandle& handle,
                     RandomStream& rng) {
  const double value = problem.query(theta, handle, rng);
  if (!std::isfinite(value)) throw NumericalError("oracle returned a non-finite loss");
  return value;
}

}  // namespace

GradientEstimate estimate_gradient(const StochasticProblem& problem, const Vector& theta, double c,
                                   const PerturbationDraw& draw, const NoiseHandle& handle, RandomStream& rng) {
  if (!(c > 0.0)) throw ConfigError("differencing magnitude c must be positive");
  if (draw.delta.size() != theta.size() || draw.mapped.size() != theta.size())
    throw ConfigError("perturbation has wrong dimension");
  GradientEstimate out;
  out.loss_plus = checked_query(problem, theta + c * draw.delta, handle, rng);
  out.loss_minus = checked_query(problem, theta - c * draw.delta, handle, rng);
  out.ghat = ((out.loss_plus - out.loss_minus) / (2.0 * c)) * draw.mapped;
  if (!out.ghat.allFinite()) throw NumericalError("gradient estimate is not finite");
  return out;
}

HessianSample sample_hessian(const StochasticProblem& problem, const Vector& theta, double c, double ctilde,
                             const PerturbationDraw& draw, const PerturbationDraw& draw_tilde,
                             const NoiseHandle& handle, RandomStream& rng, const GradientEstimate& gradient) {
  if (!(c > 0.0) || !(ctilde > 0.0)) throw ConfigError("differencing magnitudes must be positive");
  if (draw_tilde.delta.size() != theta.size() || draw_tilde.mapped.size() != theta.size())
    throw ConfigError("perturbation has wrong dimension");
  const Vector shift = ctilde * draw_tilde.delta;
  const double plus_plus = checked_query(problem, theta + c * draw.delta + shift, handle, rng);
  const double minus_plus = checked_query(problem, theta - c * draw.delta + shift, handle, rng);

  HessianSample out;
  out.lbar = plus_plus - gradient.loss_plus - minus_plus + gradient.loss_minus;
  const Matrix outer = draw_tilde.mapped * draw.mapped.transpose();
  // A + A^T is symmetric in exact arithmetic but not always bitwise; mirror the upper half.
  Matrix m = (outer + outer.transpose()) * (out.lbar / (4.0 * c * ctilde));
  m.triangularView<Eigen::StrictlyLower>() = m.transpose().triangularView<Eigen::StrictlyLower>();
  out.matrix = std::move(m);
  if (!out.matrix.allFinite()) throw NumericalError("Hessian sample is not finite");
  return out;
}

BiasNoiseDiagnostic diagnose_bias_noise(const StochasticProblem& problem, const Vector& theta, double c,
                                        const PerturbationScheme& scheme, std::size_t samples, RandomStream& rng) {
  const auto g = problem.gradient(theta);
  if (!g) throw ConfigError("bias diagnostic needs an analytic gradient");
  if (samples < 2) throw ConfigError("bias diagnostic needs at least two samples");
  const Index d = theta.size();
  Vector sum = Vector::Zero(d);
  Vector sum_sq = Vector::Zero(d);
  Vector shift = Vector::Zero(d);
  bool have_shift = false;
  // Accumulate around the first sample to limit cancellation.
  for (std::size_t s = 0; s < samples; ++s) {
    const PerturbationDraw draw = scheme.draw(rng);
    const NoiseHandle handle = NoiseHandle::make(problem.noise_mode(), rng);
    const Vector ghat = estimate_gradient(problem, theta, c, draw, handle, rng).ghat;
    if (!have_shift) {
      shift = ghat;
      have_shift = true;
    }
    const Vector centered = ghat - shift;
    sum += centered;
    sum_sq += centered.cwiseProduct(centered);
  }
  const double n = static_cast<double>(samples);
  const Vector mean_centered = sum / n;
  Vector variance = (sum_sq / n - mean_centered.cwiseProduct(mean_centered)).cwiseMax(0.0);

  BiasNoiseDiagnostic out;
  out.samples = samples;
  out.bias = mean_centered + shift - *g;
  out.noise_second_moment = variance.sum();
  out.bias_standard_error = (variance * (n / (n - 1.0)) / n).cwiseSqrt();
  return out;
}

}  // namespace harp
