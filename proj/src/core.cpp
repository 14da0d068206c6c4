#include "harp/core.hpp"

#include <cmath>

namespace harp {

std::string to_string(NoiseMode mode) { return mode == NoiseMode::iid ? "iid" : "crn"; }

NoiseMode parse_noise_mode(const std::string& text) {
  if (text == "iid" || text == "IID") return NoiseMode::iid;
  if (text == "crn" || text == "CRN") return NoiseMode::crn;
  throw ConfigError("unknown noise mode '" + text + "' (expected iid or crn)");
}

GainSchedule::GainSchedule(const Params& p) : params_(p) {
  if (!(p.a > 0.0)) throw ConfigError("gain a must be positive");
  if (!(p.A >= 0.0)) throw ConfigError("stability offset A must be nonnegative");
  if (!(p.alpha > 0.5 && p.alpha <= 1.0)) throw ConfigError("alpha must lie in (1/2, 1]");
  if (!(p.c > 0.0)) throw ConfigError("gain c must be positive");
  if (!(p.gamma > 0.0 && p.gamma < p.alpha - 0.5)) throw ConfigError("gamma must lie in (0, alpha - 1/2)");
  if (!(p.ctilde_ratio > 0.0)) throw ConfigError("ctilde_ratio must be positive");
  if (!(p.w_exponent > 0.5 && p.w_exponent <= 1.0)) throw ConfigError("w_exponent must lie in (1/2, 1]");
  if (!(p.w_offset >= 0.0)) throw ConfigError("w_offset must be nonnegative");
  if (!(p.eps0 > 0.0)) throw ConfigError("eps0 must be positive");
  if (!(p.eps_exponent > 0.0)) throw ConfigError("eps_exponent must be positive");
}

Gains GainSchedule::at(std::size_t k) const {
  const double kp1 = static_cast<double>(k) + 1.0;
  Gains g{};
  g.a = params_.a / std::pow(kp1 + params_.A, params_.alpha);
  g.c = params_.c / std::pow(kp1, params_.gamma);
  g.ctilde = params_.ctilde_ratio * g.c;
  g.w = 1.0 / std::pow(kp1 + params_.w_offset, params_.w_exponent);
  g.eps = params_.eps0 / std::pow(kp1, params_.eps_exponent);
  return g;
}

Gains make_gains(const GainSchedule& schedule, std::size_t k) { return schedule.at(k); }

Vector RandomStream::normal_vector(Index d) {
  Vector z(d);
  for (Index i = 0; i < d; ++i) z[i] = normal();
  return z;
}

namespace {

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

RandomStream spawn_rng(std::uint64_t master_seed, std::uint64_t replicate, StreamTag tag) {
  std::uint64_t key = mix64(master_seed + 0x9e3779b97f4a7c15ULL);
  key = mix64(key ^ mix64(replicate + 0x632be59bd9b4e019ULL));
  key = mix64(key ^ mix64(static_cast<std::uint64_t>(tag) * 0xd1b54a32d192ed03ULL));
  return RandomStream(key);
}

Vector InitialPoint::draw(Index dimension, RandomStream& rng) const {
  if (point) {
    if (point->size() != dimension) throw ConfigError("initial point has wrong dimension");
    return *point;
  }
  if (!(low <= high)) throw ConfigError("initial box requires low <= high");
  Vector theta(dimension);
  for (Index i = 0; i < dimension; ++i) theta[i] = rng.uniform(low, high);
  return theta;
}

void RunConfig::validate() const {
  if (dimension < 1) throw ConfigError("dimension must be at least 1");
  if (iterations < 1) throw ConfigError("iterations must be at least 1");
  if (replicates < 1) throw ConfigError("replicates must be at least 1");
  if (queries_per_iteration != 2 && queries_per_iteration != 4)
    throw ConfigError("queries_per_iteration must be 2 or 4");
}

}  // namespace harp
