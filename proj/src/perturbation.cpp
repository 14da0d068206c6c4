#include "harp/perturbation.hpp"

#include "harp/hessian.hpp"

namespace harp {

std::string to_string(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::spsa: return "spsa";
    case PerturbationKind::rdsa: return "rdsa";
    case PerturbationKind::sfsa: return "sfsa";
    case PerturbationKind::harp: return "harp";
  }
  return "unknown";
}

PerturbationKind parse_perturbation_kind(const std::string& text) {
  if (text == "spsa" || text == "SPSA") return PerturbationKind::spsa;
  if (text == "rdsa" || text == "RDSA") return PerturbationKind::rdsa;
  if (text == "sfsa" || text == "SFSA") return PerturbationKind::sfsa;
  if (text == "harp" || text == "HARP") return PerturbationKind::harp;
  throw ConfigError("unknown algorithm '" + text + "' (expected spsa, rdsa, sfsa or harp)");
}

PerturbationDraw spsa_from_signs(const Vector& signs) {
  for (Index i = 0; i < signs.size(); ++i) {
    if (signs[i] != 1.0 && signs[i] != -1.0) throw ConfigError("SPSA components must be +1 or -1");
  }
  return {signs, signs};
}

PerturbationDraw rdsa_from_normal(const Vector& z) {
  const double norm = z.norm();
  if (!(norm > 0.0)) throw NumericalError("RDSA direction from a zero vector");
  Vector delta = z / norm;
  Vector mapped = static_cast<double>(z.size()) * delta;
  return {std::move(delta), std::move(mapped)};
}

PerturbationDraw sfsa_from_normal(const Vector& z) { return {z, z}; }

PerturbationDraw harp_from_normal(const Matrix& shaping, const Matrix& hhat, const Vector& z) {
  if (shaping.rows() != z.size() || hhat.rows() != z.size()) throw ConfigError("HARP draw: dimension mismatch");
  Vector delta = shaping.triangularView<Eigen::Lower>() * z;
  Vector mapped = hhat * delta;
  return {std::move(delta), std::move(mapped)};
}

PerturbationDraw draw_spsa(Index d, RandomStream& rng) {
  if (d < 1) throw ConfigError("dimension must be at least 1");
  Vector s(d);
  for (Index i = 0; i < d; ++i) s[i] = rng.rademacher();
  return {s, s};
}

PerturbationDraw draw_rdsa(Index d, RandomStream& rng) {
  if (d < 1) throw ConfigError("dimension must be at least 1");
  Vector z = rng.normal_vector(d);
  while (!(z.norm() > 0.0)) z = rng.normal_vector(d);
  return rdsa_from_normal(z);
}

PerturbationDraw draw_sfsa(Index d, RandomStream& rng) {
  if (d < 1) throw ConfigError("dimension must be at least 1");
  return sfsa_from_normal(rng.normal_vector(d));
}

PerturbationDraw draw_harp(const Matrix& shaping, const Matrix& hhat, RandomStream& rng) {
  return harp_from_normal(shaping, hhat, rng.normal_vector(hhat.rows()));
}

PerturbationDraw draw_harp(const Matrix& hhat, RandomStream& rng) {
  const Matrix c = shaping_factor(hhat);
  return draw_harp(c, hhat, rng);
}

PerturbationScheme PerturbationScheme::unit(PerturbationKind kind, Index dimension) {
  if (dimension < 1) throw ConfigError("dimension must be at least 1");
  PerturbationScheme s(kind, dimension);
  if (kind == PerturbationKind::harp) {
    s.hhat_ = Matrix::Identity(dimension, dimension);
    s.shaping_ = Matrix::Identity(dimension, dimension);
  }
  return s;
}

PerturbationScheme PerturbationScheme::shaped(const Matrix& hhat) { return shaped(hhat, shaping_factor(hhat)); }

PerturbationScheme PerturbationScheme::shaped(const Matrix& hhat, const Matrix& shaping) {
  if (hhat.rows() != hhat.cols() || shaping.rows() != hhat.rows() || shaping.cols() != hhat.cols())
    throw ConfigError("shaped perturbation: dimension mismatch");
  PerturbationScheme s(PerturbationKind::harp, hhat.rows());
  s.hhat_ = hhat;
  s.shaping_ = shaping;
  return s;
}

PerturbationDraw PerturbationScheme::draw(RandomStream& rng) const {
  switch (kind_) {
    case PerturbationKind::spsa: return draw_spsa(dimension_, rng);
    case PerturbationKind::rdsa: return draw_rdsa(dimension_, rng);
    case PerturbationKind::sfsa: return draw_sfsa(dimension_, rng);
    case PerturbationKind::harp: return draw_harp(shaping_, hhat_, rng);
  }
  throw ConfigError("unknown perturbation kind");
}

}  // namespace harp
