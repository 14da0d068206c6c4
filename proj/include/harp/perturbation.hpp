#pragma once

#include "harp/core.hpp"

#include <string>

namespace harp {

enum class PerturbationKind { spsa, rdsa, sfsa, harp };

std::string to_string(PerturbationKind kind);
PerturbationKind parse_perturbation_kind(const std::string& text);

/// A random direction and its paired odd mapping, with E[mapped * delta^T] = I.
struct PerturbationDraw {
  Vector delta;
  Vector mapped;
};

// Rademacher components, mapped = delta.
PerturbationDraw draw_spsa(Index d, RandomStream& rng);
// Uniform on the unit sphere, mapped = d * delta.
PerturbationDraw draw_rdsa(Index d, RandomStream& rng);
// Standard normal, mapped = delta.
PerturbationDraw draw_sfsa(Index d, RandomStream& rng);
// delta = C z with z standard normal and C C^T = hhat^{-1}; mapped = hhat * delta.
PerturbationDraw draw_harp(const Matrix& shaping, const Matrix& hhat, RandomStream& rng);
// Same, computing the shaping factor first. Throws NumericalError for non-PD hhat.
PerturbationDraw draw_harp(const Matrix& hhat, RandomStream& rng);

// Deterministic constructions from the underlying variates. Negating the
// input negates both outputs exactly.
PerturbationDraw spsa_from_signs(const Vector& signs);
PerturbationDraw rdsa_from_normal(const Vector& z);
PerturbationDraw sfsa_from_normal(const Vector& z);
PerturbationDraw harp_from_normal(const Matrix& shaping, const Matrix& hhat, const Vector& z);

/// Generator of (delta, m(delta)) with covariance Sigma^{-1}, Sigma = I for the
/// unit-covariance schemes and Sigma = hhat for HARP.
class PerturbationScheme {
 public:
  static PerturbationScheme unit(PerturbationKind kind, Index dimension);
  static PerturbationScheme shaped(const Matrix& hhat);
  static PerturbationScheme shaped(const Matrix& hhat, const Matrix& shaping);

  PerturbationKind kind() const { return kind_; }
  Index dimension() const { return dimension_; }
  const Matrix& hhat() const { return hhat_; }
  const Matrix& shaping() const { return shaping_; }

  PerturbationDraw draw(RandomStream& rng) const;

 private:
  PerturbationScheme(PerturbationKind kind, Index dimension) : kind_(kind), dimension_(dimension) {}

  PerturbationKind kind_;
  Index dimension_;
  Matrix hhat_;
  Matrix shaping_;
};

}  // namespace harp
