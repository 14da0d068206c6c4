#pragma once

#include "harp/hessian.hpp"
#include "harp/perturbation.hpp"
#include "harp/problems.hpp"

namespace harp {

/// theta' = theta - a * ghat.
Vector sa_step(const Vector& theta, double a, const Vector& ghat);

struct LoopOptions {
  /// Keep every n-th iterate in the record (the first and last are always kept).
  std::size_t record_every = 1;
  /// HARP only: keep sampling Hessians into H-bar but hold the preconditioner at I.
  bool freeze_hessian = false;
  /// HARP only: eigenvalue floor of the regularized Hessian relative to its largest one.
  double condition_ceiling = 1e8;
};

/// Hessian-aided random perturbation: perturbations with covariance Hhat^{-1}
/// and mapping Hhat * delta, four queries per iteration. Stream usage per
/// replicate: init, perturbation, perturbation_tilde, noise, noise_hessian.
RunRecord run_harp(const StochasticProblem& problem, const GainSchedule& schedule, const RunConfig& config,
                   std::size_t replicate, const LoopOptions& options = {});

/// SPSA, RDSA or SFSA. With queries_per_iteration = 4 each step averages two
/// independent two-query estimates.
RunRecord run_baseline(PerturbationKind kind, const StochasticProblem& problem, const GainSchedule& schedule,
                       const RunConfig& config, std::size_t replicate, const LoopOptions& options = {});

/// Dispatches to run_harp or run_baseline.
RunRecord run_algorithm(PerturbationKind kind, const StochasticProblem& problem, const GainSchedule& schedule,
                        const RunConfig& config, std::size_t replicate, const LoopOptions& options = {});

}  // namespace harp
