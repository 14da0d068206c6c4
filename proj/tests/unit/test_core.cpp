#include "harp/core.hpp"

#include <doctest.h>

#include <cmath>

using namespace harp;

namespace {

GainSchedule::Params params(double a, double A, double alpha, double c, double gamma) {
  GainSchedule::Params p;
  p.a = a;
  p.A = A;
  p.alpha = alpha;
  p.c = c;
  p.gamma = gamma;
  return p;
}

}  // namespace

TEST_CASE("gains at k = 0 with unit numerators") {
  const GainSchedule s(params(1.0, 0.0, 1.0, 1.0, 1.0 / 6.0));
  const Gains g = make_gains(s, 0);
  CHECK(g.a == 1.0);
  CHECK(g.c == 1.0);
  CHECK(g.ctilde == 1.0);
}

TEST_CASE("gains follow the power laws") {
  const GainSchedule s(params(1.0, 100.0, 0.602, 1.0, 0.101));
  const Gains g = s.at(999);
  CHECK(g.a == doctest::Approx(1.0 / std::pow(1100.0, 0.602)).epsilon(1e-15));
  CHECK(g.c == doctest::Approx(1.0 / std::pow(1000.0, 0.101)).epsilon(1e-15));
}

TEST_CASE("regularization gain") {
  GainSchedule::Params p;
  p.eps0 = 0.1;
  p.eps_exponent = 0.5;
  CHECK(GainSchedule(p).at(3).eps == doctest::Approx(0.05).epsilon(1e-15));
}

TEST_CASE("smoothing weight keeps the identity prior by default") {
  GainSchedule::Params p;
  const GainSchedule s(p);
  CHECK(s.at(0).w == doctest::Approx(0.5));
  CHECK(s.at(8).w == doctest::Approx(0.1));
  p.w_offset = 0.0;
  p.w_exponent = 0.75;
  CHECK(GainSchedule(p).at(15).w == doctest::Approx(std::pow(16.0, -0.75)));
}

TEST_CASE("gain sequences are positive and nonincreasing") {
  GainSchedule::Params p = params(2.0, 10.0, 0.602, 0.5, 0.101);
  p.ctilde_ratio = 1.5;
  p.w_exponent = 0.8;
  const GainSchedule s(p);
  Gains prev = s.at(0);
  for (std::size_t k = 1; k < 5000; ++k) {
    const Gains g = s.at(k);
    REQUIRE(g.a > 0.0);
    REQUIRE(g.c > 0.0);
    REQUIRE(g.ctilde > 0.0);
    REQUIRE(g.w > 0.0);
    REQUIRE(g.eps > 0.0);
    REQUIRE(g.a <= prev.a);
    REQUIRE(g.c <= prev.c);
    REQUIRE(g.ctilde <= prev.ctilde);
    REQUIRE(g.w <= prev.w);
    REQUIRE(g.eps <= prev.eps);
    prev = g;
  }
}

TEST_CASE("exponent admissibility") {
  CHECK_NOTHROW(GainSchedule(params(1.0, 0.0, 1.0, 1.0, 1.0 / 6.0)));
  CHECK_THROWS_AS(GainSchedule(params(1.0, 0.0, 0.4, 1.0, 0.1)), ConfigError);
  CHECK_THROWS_AS(GainSchedule(params(1.0, 0.0, 0.602, 1.0, 0.2)), ConfigError);
  CHECK_THROWS_AS(GainSchedule(params(1.0, 0.0, 1.1, 1.0, 0.1)), ConfigError);
  CHECK_THROWS_AS(GainSchedule(params(0.0, 0.0, 1.0, 1.0, 0.1)), ConfigError);
  CHECK_THROWS_AS(GainSchedule(params(1.0, -1.0, 1.0, 1.0, 0.1)), ConfigError);
  CHECK_THROWS_AS(GainSchedule(params(1.0, 0.0, 1.0, 0.0, 0.1)), ConfigError);
  CHECK_THROWS_AS(GainSchedule(params(1.0, 0.0, 1.0, 1.0, 0.0)), ConfigError);

  const GainSchedule s(params(1.0, 0.0, 0.602, 1.0, 0.101));
  CHECK(s.step_sum_diverges());
  CHECK(s.weighted_noise_sum_converges());
}

TEST_CASE("spawn_rng is deterministic and separates streams") {
  auto first = [](std::uint64_t rep, StreamTag tag) {
    RandomStream r = spawn_rng(42, rep, tag);
    std::vector<std::uint64_t> v(100);
    for (auto& x : v) x = r();
    return v;
  };
  CHECK(first(0, StreamTag::perturbation) == first(0, StreamTag::perturbation));
  CHECK(first(0, StreamTag::perturbation) != first(1, StreamTag::perturbation));
  CHECK(first(0, StreamTag::noise) != first(0, StreamTag::perturbation));
}

TEST_CASE("random stream moments") {
  RandomStream r = spawn_rng(7, 0, StreamTag::monte_carlo);
  const int n = 200000;
  double s = 0.0, s2 = 0.0, rs = 0.0, u = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
    const double b = r.rademacher();
    REQUIRE((b == 1.0 || b == -1.0));
    rs += b;
    u += r.uniform();
  }
  CHECK(std::abs(s / n) < 0.01);
  CHECK(std::abs(s2 / n - 1.0) < 0.02);
  CHECK(std::abs(rs / n) < 0.01);
  CHECK(std::abs(u / n - 0.5) < 0.005);
}

TEST_CASE("initial point") {
  RandomStream r(3);
  InitialPoint box;
  box.low = -20.0;
  box.high = 20.0;
  const Vector x = box.draw(50, r);
  CHECK(x.size() == 50);
  CHECK(x.maxCoeff() <= 20.0);
  CHECK(x.minCoeff() >= -20.0);

  InitialPoint fixed;
  fixed.point = Vector::Constant(3, 2.0);
  CHECK(fixed.draw(3, r) == Vector::Constant(3, 2.0));
  CHECK_THROWS_AS(fixed.draw(4, r), ConfigError);
}

TEST_CASE("run config validation") {
  RunConfig c;
  CHECK_NOTHROW(c.validate());
  c.queries_per_iteration = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.queries_per_iteration = 4;
  c.dimension = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.dimension = 1;
  c.iterations = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.iterations = 1;
  c.replicates = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("noise mode names and numerical error context") {
  CHECK(parse_noise_mode("iid") == NoiseMode::iid);
  CHECK(parse_noise_mode("crn") == NoiseMode::crn);
  CHECK(to_string(NoiseMode::crn) == "crn");
  CHECK_THROWS_AS(parse_noise_mode("gaussian"), ConfigError);

  const NumericalError e("loss became non-finite", 17);
  CHECK(e.iteration() == 17u);
  CHECK(std::string(e.what()).find("iteration 17") != std::string::npos);
}
