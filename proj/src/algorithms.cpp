#include "harp/algorithms.hpp"

#include "harp/estimators.hpp"

#include <cmath>

namespace harp {

Vector sa_step(const Vector& theta, double a, const Vector& ghat) {
  if (theta.size() != ghat.size()) throw ConfigError("sa_step: dimension mismatch");
  return theta - a * ghat;
}

namespace {

class Recorder {
 public:
  Recorder(const StochasticProblem& problem, const Vector& theta0, std::size_t iterations, std::size_t every)
      : problem_(problem), iterations_(iterations), every_(every == 0 ? 1 : every) {
    const std::size_t n = iterations / every_ + 2;
    record_.iteration.reserve(n);
    record_.cumulative_queries.reserve(n);
    record_.loss.reserve(n);
    record_.distance.reserve(n);
    record_.normalized_distance.reserve(n);
    record_.initial = theta0;
    initial_distance_ = (theta0 - problem.optimum()).norm();
  }

  void observe(std::size_t k, std::uint64_t queries, const Vector& theta) {
    if (!theta.allFinite()) throw NumericalError("iterate became non-finite", k);
    if (k % every_ != 0 && k != iterations_) return;
    const double value = problem_.loss(theta);
    if (!std::isfinite(value)) throw NumericalError("loss became non-finite", k);
    const double dist = (theta - problem_.optimum()).norm();
    record_.iteration.push_back(k);
    record_.cumulative_queries.push_back(queries);
    record_.loss.push_back(value);
    record_.distance.push_back(dist);
    record_.normalized_distance.push_back(initial_distance_ > 0.0 ? dist / initial_distance_ : dist);
  }

  RunRecord finish(const Vector& theta) {
    record_.terminal = theta;
    return std::move(record_);
  }

  RunRecord& record() { return record_; }

 private:
  const StochasticProblem& problem_;
  std::size_t iterations_;
  std::size_t every_;
  double initial_distance_ = 0.0;
  RunRecord record_;
};

void check_problem(const StochasticProblem& problem, const RunConfig& config) {
  config.validate();
  if (static_cast<std::size_t>(problem.dimension()) != config.dimension)
    throw ConfigError("run dimension " + std::to_string(config.dimension) + " does not match problem dimension " +
                      std::to_string(problem.dimension()));
  if (problem.noise_mode() != config.noise_mode) throw ConfigError("run noise mode does not match the problem");
}

}  // namespace

RunRecord run_harp(const StochasticProblem& problem, const GainSchedule& schedule, const RunConfig& config,
                   std::size_t replicate, const LoopOptions& options) {
  check_problem(problem, config);
  if (config.queries_per_iteration != 4) throw ConfigError("HARP uses exactly 4 queries per iteration");
  const Index d = problem.dimension();
  const std::uint64_t seed = config.master_seed;
  RandomStream init = spawn_rng(seed, replicate, StreamTag::init);
  RandomStream perturb = spawn_rng(seed, replicate, StreamTag::perturbation);
  RandomStream perturb_tilde = spawn_rng(seed, replicate, StreamTag::perturbation_tilde);
  RandomStream noise = spawn_rng(seed, replicate, StreamTag::noise);
  RandomStream noise_hessian = spawn_rng(seed, replicate, StreamTag::noise_hessian);

  Vector theta = config.init.draw(d, init);
  HessianTracker tracker(d, options.condition_ceiling);
  const Matrix identity = Matrix::Identity(d, d);
  Recorder recorder(problem, theta, config.iterations, options.record_every);
  std::uint64_t queries = 0;
  recorder.observe(0, queries, theta);

  for (std::size_t k = 0; k < config.iterations; ++k) {
    try {
      const Gains g = schedule.at(k);
      const Matrix& hhat = options.freeze_hessian ? identity : tracker.hhat();
      const Matrix& shaping = options.freeze_hessian ? identity : tracker.shaping();
      const PerturbationDraw draw = draw_harp(shaping, hhat, perturb);
      const NoiseHandle handle = NoiseHandle::make(problem.noise_mode(), noise);
      const GradientEstimate grad = estimate_gradient(problem, theta, g.c, draw, handle, noise);
      const Vector previous = theta;
      theta = sa_step(theta, g.a, grad.ghat);

      const PerturbationDraw draw_tilde = draw_harp(shaping, hhat, perturb_tilde);
      const HessianSample sample =
          sample_hessian(problem, previous, g.c, g.ctilde, draw, draw_tilde, handle, noise_hessian, grad);
      tracker.update(sample.matrix, g.w);
      if (!options.freeze_hessian) tracker.regularize(g.eps);
      queries += 4;
    } catch (const NumericalError& e) {
      if (e.iteration()) throw;
      throw NumericalError(e.what(), k);
    }
    recorder.observe(k + 1, queries, theta);
  }

  RunRecord out = recorder.finish(theta);
  out.hessian_bar = tracker.hbar();
  out.hessian_hat = tracker.hhat();
  out.clipped_regularizations = tracker.clip_count();
  return out;
}

RunRecord run_baseline(PerturbationKind kind, const StochasticProblem& problem, const GainSchedule& schedule,
                       const RunConfig& config, std::size_t replicate, const LoopOptions& options) {
  if (kind == PerturbationKind::harp) throw ConfigError("run_baseline expects spsa, rdsa or sfsa");
  check_problem(problem, config);
  const Index d = problem.dimension();
  const std::uint64_t seed = config.master_seed;
  RandomStream init = spawn_rng(seed, replicate, StreamTag::init);
  RandomStream perturb = spawn_rng(seed, replicate, StreamTag::perturbation);
  RandomStream noise = spawn_rng(seed, replicate, StreamTag::noise);

  const PerturbationScheme scheme = PerturbationScheme::unit(kind, d);
  const int estimates = config.queries_per_iteration / 2;
  Vector theta = config.init.draw(d, init);
  Recorder recorder(problem, theta, config.iterations, options.record_every);
  std::uint64_t queries = 0;
  recorder.observe(0, queries, theta);

  for (std::size_t k = 0; k < config.iterations; ++k) {
    try {
      const Gains g = schedule.at(k);
      Vector ghat = Vector::Zero(d);
      for (int e = 0; e < estimates; ++e) {
        const PerturbationDraw draw = scheme.draw(perturb);
        const NoiseHandle handle = NoiseHandle::make(problem.noise_mode(), noise);
        ghat += estimate_gradient(problem, theta, g.c, draw, handle, noise).ghat;
      }
      if (estimates > 1) ghat /= static_cast<double>(estimates);
      theta = sa_step(theta, g.a, ghat);
      queries += static_cast<std::uint64_t>(config.queries_per_iteration);
    } catch (const NumericalError& e) {
      if (e.iteration()) throw;
      throw NumericalError(e.what(), k);
    }
    recorder.observe(k + 1, queries, theta);
  }
  return recorder.finish(theta);
}

RunRecord run_algorithm(PerturbationKind kind, const StochasticProblem& problem, const GainSchedule& schedule,
                        const RunConfig& config, std::size_t replicate, const LoopOptions& options) {
  if (kind == PerturbationKind::harp) return run_harp(problem, schedule, config, replicate, options);
  return run_baseline(kind, problem, schedule, config, replicate, options);
}

}  // namespace harp
