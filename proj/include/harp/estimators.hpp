#pragma once

#include "harp/perturbation.hpp"
#include "harp/problems.hpp"

namespace harp {

struct GradientEstimate {
  Vector ghat;
  double loss_plus = 0.0;   // l(theta + c delta)
  double loss_minus = 0.0;  // l(theta - c delta)
  int queries_used = 2;
};

struct HessianSample {
  Matrix matrix;  // bitwise symmetric
  double lbar = 0.0;
  int queries_used = 2;  // new queries only; the gradient pair is reused
};

struct BiasNoiseDiagnostic {
  Vector bias;
  Vector bias_standard_error;
  double noise_second_moment = 0.0;
  std::size_t samples = 0;
};

/// ghat = [l(theta + c delta) - l(theta - c delta)] m(delta) / (2c).
GradientEstimate estimate_gradient(const StochasticProblem& problem, const Vector& theta, double c,
                                   const PerturbationDraw& draw, const NoiseHandle& handle, RandomStream& rng);

/// Rank-two Hessian sample from the four-point difference
///   lbar = l(theta + c d + ct dt) - l(theta + c d) - l(theta - c d + ct dt) + l(theta - c d),
/// reusing the two losses of `gradient`.
HessianSample sample_hessian(const StochasticProblem& problem, const Vector& theta, double c, double ctilde,
                             const PerturbationDraw& draw, const PerturbationDraw& draw_tilde,
                             const NoiseHandle& handle, RandomStream& rng, const GradientEstimate& gradient);

/// Monte-Carlo bias and spread of ghat at theta. Each sample uses a fresh
/// perturbation and a fresh noise handle.
BiasNoiseDiagnostic diagnose_bias_noise(const StochasticProblem& problem, const Vector& theta, double c,
                                        const PerturbationScheme& scheme, std::size_t samples, RandomStream& rng);

}  // namespace harp
