#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace harp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Rejected input: bad gain exponents, dimension mismatches, malformed configs.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Failure of a numerical routine or an oracle (non-finite loss, failed
/// factorization, unstable Lyapunov system). Carries the iteration index
/// when raised from inside an optimizer loop.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what, std::optional<std::size_t> iteration = std::nullopt)
      : std::runtime_error(iteration ? what + " (iteration " + std::to_string(*iteration) + ")" : what),
        iteration_(iteration) {}

  std::optional<std::size_t> iteration() const { return iteration_; }

 private:
  std::optional<std::size_t> iteration_;
};

enum class NoiseMode { iid, crn };

std::string to_string(NoiseMode mode);
NoiseMode parse_noise_mode(const std::string& text);

/// Gain values at one iteration.
struct Gains {
  double a;       // step size
  double c;       // differencing magnitude
  double ctilde;  // Hessian differencing magnitude
  double w;       // Hessian smoothing weight
  double eps;     // regularization
};

/// Power-law gain sequences
///   a_k = a / (k + 1 + A)^alpha,  c_k = c / (k + 1)^gamma,  ctilde_k = ratio * c_k,
///   w_k = 1 / (k + 1 + w_offset)^w_exponent (the default offset 1 keeps the
///   identity initialization of H-bar in the average),  eps_k = eps0 / (k + 1)^eps_exponent.
/// Construction enforces alpha in (1/2, 1] and gamma in (0, alpha - 1/2), which
/// gives sum a_k = inf and sum a_k^2 / c_k^2 < inf.
class GainSchedule {
 public:
  struct Params {
    double a = 0.1;
    double A = 0.0;
    double alpha = 0.602;
    double c = 0.1;
    double gamma = 0.101;
    double ctilde_ratio = 1.0;
    double w_exponent = 1.0;
    double w_offset = 1.0;
    double eps0 = 1.0;
    double eps_exponent = 0.5;
  };

  GainSchedule() : GainSchedule(Params{}) {}
  explicit GainSchedule(const Params& params);

  Gains at(std::size_t k) const;
  const Params& params() const { return params_; }

  bool step_sum_diverges() const { return params_.alpha <= 1.0; }
  bool weighted_noise_sum_converges() const { return 2.0 * params_.alpha - 2.0 * params_.gamma > 1.0; }

 private:
  Params params_;
};

Gains make_gains(const GainSchedule& schedule, std::size_t k);

enum class StreamTag : std::uint64_t {
  init = 1,
  perturbation = 2,
  perturbation_tilde = 3,
  noise = 4,
  noise_hessian = 5,
  monte_carlo = 6,
};

/// SplitMix64 counter stream. Cheap to construct, so a stream can be rebuilt
/// from a 64-bit key wherever a noise realization must be replayed.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  explicit RandomStream(std::uint64_t key) : state_(key) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  double normal() { return normal_(*this); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(*this); }
  double uniform(double low, double high) { return std::uniform_real_distribution<double>(low, high)(*this); }
  double rademacher() { return ((*this)() >> 63) ? 1.0 : -1.0; }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(*this); }

  Vector normal_vector(Index d);

 private:
  std::uint64_t state_;
  std::normal_distribution<double> normal_;
};

/// Deterministic stream keyed by (seed, replicate, tag).
RandomStream spawn_rng(std::uint64_t master_seed, std::uint64_t replicate, StreamTag tag);

/// Starting point: a fixed vector, or uniform over [low, high]^d.
struct InitialPoint {
  std::optional<Vector> point;
  double low = -1.0;
  double high = 1.0;

  Vector draw(Index dimension, RandomStream& rng) const;
};

struct RunConfig {
  std::size_t dimension = 1;
  std::size_t iterations = 1;
  std::size_t replicates = 1;
  int queries_per_iteration = 2;
  std::uint64_t master_seed = 0;
  NoiseMode noise_mode = NoiseMode::iid;
  InitialPoint init;

  void validate() const;
};

/// Per-iteration trace of one optimizer run. All arrays have K + 1 entries.
struct RunRecord {
  std::vector<std::size_t> iteration;
  std::vector<std::uint64_t> cumulative_queries;
  std::vector<double> loss;  // empty when the problem has no analytic loss
  std::vector<double> distance;
  std::vector<double> normalized_distance;
  Vector initial;
  Vector terminal;
  std::optional<Matrix> hessian_bar;
  std::optional<Matrix> hessian_hat;
  std::size_t clipped_regularizations = 0;

  std::size_t size() const { return iteration.size(); }
};

}  // namespace harp
