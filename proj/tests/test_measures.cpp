// Copyright (c) 2026, katolab contributors
// SPDX-License-Identifier: Apache-2.0

#include "katolab/kernels.hpp"
#include "katolab/measures.hpp"
#include "katolab/quadrature.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace katolab;

namespace {

Point pt(std::initializer_list<double> v) {
  Point p(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) p(i++) = x;
  return p;
}

// Mass of phi_n over its support ball by brute tensor quadrature.
double mollifier_mass(int d, int level) {
  const Mollifier phi(d, level);
  const double r = phi.radius();
  std::vector<QuadRule> axes(d, composite_legendre(-r, r, 8, 10));
  return TensorRule(std::move(axes)).integrate([&](const Point& x) { return phi(x); });
}

}  // namespace

TEST_CASE("mollifier has unit mass at every level") {
  for (int d = 1; d <= 3; ++d) {
    for (int n : {0, 2, 5}) {
      CHECK(mollifier_mass(d, n) == doctest::Approx(1.0).epsilon(2e-6));
    }
  }
  const Mollifier phi(3, 2);
  CHECK(phi(pt({0.3, 0, 0})) == 0.0);
  CHECK(phi(pt({0.1, 0, 0})) > 0.0);
}

TEST_CASE("mollifier marginal integrates the slice") {
  for (int d : {2, 3}) {
    const Mollifier phi(d, 1);
    const double r = phi.radius();
    for (double h : {0.0, 0.13, 0.31, 0.45}) {
      std::vector<QuadRule> axes(d - 1, composite_legendre(-r, r, 8, 10));
      const double slice = TensorRule(std::move(axes)).integrate([&](const Point& u) {
        Point x(d);
        x(0) = h;
        for (int k = 1; k < d; ++k) x(k) = u(k - 1);
        return phi(x);
      });
      CHECK(phi.marginal(h) == doctest::Approx(slice).epsilon(1e-5));
    }
  }
}

TEST_CASE("mollified constant drift is the constant") {
  const DriftMeasure mu = DriftMeasure::constant(pt({1.5, -0.5, 0.0}));
  for (int n : {0, 3}) {
    const Point b = mollified_drift(mu, n, pt({0.2, 0.7, -1.1}));
    CHECK(b(0) == doctest::Approx(1.5).epsilon(1e-9));
    CHECK(b(1) == doctest::Approx(-0.5).epsilon(1e-9));
    CHECK(b(2) == 0.0);
  }
}

TEST_CASE("mollification converges to a continuous density") {
  const Point c = pt({0.1, 0.0, -0.2});
  const SignedMeasure bump = SignedMeasure::gaussian_bump(1.0, 0.5, c);
  double prev = 1e9;
  for (int n : {1, 3, 5}) {
    double worst = 0.0;
    for (const Point& x : {pt({0, 0, 0}), pt({0.4, -0.3, 0.2}), pt({-0.6, 0.5, 0.1})})
      worst = std::max(worst, std::abs(bump.mollify(n, x) - bump.density_at(x)));
    CHECK(worst < prev);
    prev = worst;
  }
  CHECK(prev < 1e-3);
}

TEST_CASE("Cantor mollification agrees with a sampling oracle") {
  const SignedMeasure cantor = SignedMeasure::cantor_product(0, 1.0, pt({0, 0, 0}), 1.0);
  const int level = 2;
  const Mollifier phi(3, level);
  Rng rng = make_stream(11, 0);
  for (const Point& x : {pt({0.0, 0.5, 0.5}), pt({2.0 / 9.0, 0.5, 0.5}), pt({0.7, 0.4, 0.6})}) {
    const double recursion = cantor.mollify(level, x);
    const Box window = Box::cube(x, phi.radius());
    const double mass = cantor.mass_in(window);
    const std::size_t n = 400000;
    const auto pts = cantor.sample(n, window, rng);
    double s = 0.0, s2 = 0.0;
    for (const auto& y : pts) {
      const double v = mass * phi(x - y);
      s += v;
      s2 += v * v;
    }
    const double mean = s / n;
    const double se = std::sqrt((s2 / n - mean * mean) / n);
    CHECK(std::abs(recursion - mean) <= 3.0 * se + 1e-12);
    CHECK(recursion > 0.0);
  }
}

TEST_CASE("Cantor mass and self-similarity") {
  const SignedMeasure cantor = SignedMeasure::cantor_product(0, 2.0, pt({0, 0}), 1.0);
  CHECK(cantor.mass_in(Box{pt({-1, -1}), pt({2, 2})}) == doctest::Approx(2.0));
  CHECK(cantor.mass_in(Box{pt({0, 0}), pt({1.0 / 3.0, 1})}) == doctest::Approx(1.0));
  CHECK(cantor.mass_in(Box{pt({0.4, 0}), pt({0.6, 1})}) == doctest::Approx(0.0));
  CHECK(cantor.mass_in(Box{pt({0, 0}), pt({1.0 / 9.0, 0.5})}) == doctest::Approx(0.25));
  // integration of y_0 and y_0^2 against the Cantor axis: mean 1/2, second moment 3/8
  const Box all{pt({-1, -1}), pt({2, 2})};
  CHECK(cantor.integrate([](const Point& y) { return y(0); }, all) ==
        doctest::Approx(1.0).epsilon(1e-9));
  CHECK(cantor.integrate([](const Point& y) { return y(0) * y(0); }, all) ==
        doctest::Approx(0.75).epsilon(1e-9));
}

TEST_CASE("Gaussian integrals against densities and the Cantor product") {
  // Lebesgue: (pi / prec)^{d/2}
  const SignedMeasure leb = SignedMeasure::constant(3, 1.0);
  CHECK(leb.gaussian_integral(pt({0.3, 0, 1}), 2.0) ==
        doctest::Approx(std::pow(std::numbers::pi / 2.0, 1.5)).epsilon(1e-12));
  // Gaussian bump: product of 1-d convolutions
  const double w = 0.5, prec = 3.0;
  const SignedMeasure bump = SignedMeasure::gaussian_bump(2.0, w, pt({0, 0}));
  const Point x = pt({0.4, -0.1});
  const double a = 1.0 / (2 * w * w);
  double expect = 2.0;
  for (int k = 0; k < 2; ++k)
    expect *= std::sqrt(std::numbers::pi / (a + prec)) * std::exp(-a * prec / (a + prec) * x(k) * x(k));
  CHECK(bump.gaussian_integral(x, prec) == doctest::Approx(expect).epsilon(1e-7));
  IntegrationOptions fine;
  fine.hermite_nodes = 16;
  CHECK(bump.gaussian_integral(x, prec, fine) == doctest::Approx(expect).epsilon(1e-10));
  // Cantor product in d=1 against a fine composite rule on the measure itself
  const SignedMeasure c1 = SignedMeasure::cantor_product(0, 1.0, pt({0}), 1.0);
  const double direct = c1.integrate([&](const Point& y) { return std::exp(-5.0 * (y(0) - 0.3) * (y(0) - 0.3)); },
                                     Box{pt({-1}), pt({2})});
  CHECK(c1.gaussian_integral(pt({0.3}), 5.0) == doctest::Approx(direct).epsilon(1e-5));
}

TEST_CASE("Kato ball integral of bounded densities") {
  // bounded density M: sup_x int_{B(x,r)} |x-y|^{1-d} f dy <= M sigma_{d-1} r
  for (int d = 1; d <= 3; ++d) {
    const SignedMeasure m = SignedMeasure::constant(d, 2.0);
    for (double r : {0.5, 0.1}) {
      const double v = m.kato_ball_integral(Point::Zero(d), r);
      CHECK(v == doctest::Approx(2.0 * sphere_area(d) * r).epsilon(1e-8));
    }
    const SignedMeasure b = SignedMeasure::gaussian_bump(1.0, 0.3, Point::Zero(d));
    CHECK(b.kato_ball_integral(Point::Constant(d, 0.1), 0.2) <= sphere_area(d) * 0.2);
  }
}

TEST_CASE("Kato ball integral of singular measures") {
  const SignedMeasure plane = SignedMeasure::hyperplane(0, 0.5, 1.0, pt({0, 0, 0}), 1.0);
  CHECK(std::isinf(plane.kato_ball_integral(pt({0.5, 0.5, 0.5}), 0.1)));
  // off the plane: 2 pi log(r/h)
  CHECK(plane.kato_ball_integral(pt({0.55, 0.5, 0.5}), 0.1) ==
        doctest::Approx(2.0 * std::numbers::pi * std::log(2.0)).epsilon(1e-12));
  const SignedMeasure cantor = SignedMeasure::cantor_product(0, 1.0, pt({0, 0, 0}), 1.0);
  const double v1 = cantor.kato_ball_integral(pt({0, 0.5, 0.5}), 1.0 / 9.0);
  const double v2 = cantor.kato_ball_integral(pt({0, 0.5, 0.5}), 1.0 / 27.0);
  CHECK(std::isfinite(v1));
  CHECK(v2 / v1 == doctest::Approx(0.5).epsilon(1e-2));
  const SignedMeasure r_ok = SignedMeasure::radial_power(1.0, 0.5, 1.0, pt({0, 0, 0}));
  CHECK(std::isfinite(r_ok.kato_ball_integral(pt({0, 0, 0}), 0.5)));
  const SignedMeasure r_bad = SignedMeasure::radial_power(1.0, 1.5, 1.0, pt({0, 0, 0}));
  CHECK(std::isinf(r_bad.kato_ball_integral(pt({0, 0, 0}), 0.5)));
}

TEST_CASE("total variation and sums") {
  const SignedMeasure neg = SignedMeasure::gaussian_bump(-1.5, 0.5, pt({0, 0}));
  CHECK_FALSE(neg.is_nonnegative());
  const SignedMeasure a = neg.abs();
  CHECK(a.is_nonnegative());
  CHECK(a.density_at(pt({0, 0})) == doctest::Approx(1.5));
  const SignedMeasure sum = SignedMeasure::weighted_sum(
      {{1.0, SignedMeasure::cantor_product(0, 1.0, pt({0, 0}), 1.0)}, {-1.0, neg}});
  CHECK_FALSE(sum.abs().tv_is_exact());
  CHECK(sum.abs().is_nonnegative());
}

TEST_CASE("JSON round trip and schema errors") {
  const auto j = nlohmann::json::parse(R"({"dimension": 3, "components": [
      {"kind": "cantor_product", "axis": 0, "weight": 1.0, "lo": [0,0,0], "side": 1.0},
      {"kind": "density", "profile": "gaussian_bump", "amplitude": 1.0, "width": 0.5, "center": [0,0,0]},
      {"kind": "sum", "terms": [{"coefficient": 2.0, "measure": {"kind": "density", "profile": "constant", "value": 1.0}}]}
  ]})");
  const DriftMeasure mu = DriftMeasure::from_json(j);
  CHECK(mu.to_json() == j);
  CHECK(mu.component(0).kind() == SignedMeasure::Kind::CantorProduct);
  auto bad = j;
  bad["components"][1]["colour"] = "red";
  CHECK_THROWS_AS(DriftMeasure::from_json(bad), SchemaError);
  auto bad_kind = j;
  bad_kind["components"][0]["kind"] = "fractal";
  CHECK_THROWS_AS(DriftMeasure::from_json(bad_kind), SchemaError);
  auto short_list = j;
  short_list["components"].erase(2);
  CHECK_THROWS_AS(DriftMeasure::from_json(short_list), SchemaError);
}

TEST_CASE("drift fields") {
  const DriftField zero = DriftField::from_measure(DriftMeasure::zero(2), std::nullopt);
  CHECK(zero.is_zero());
  const DriftField ou = DriftField::from_measure(DriftMeasure::ornstein_uhlenbeck(2, 0.4, 6.0), std::nullopt);
  CHECK(ou(pt({1.0, -2.0}))(1) == doctest::Approx(0.8));
  CHECK(ou(pt({10.0, 0.0}))(0) == doctest::Approx(-2.4));
  const DriftMeasure cantor(1, {SignedMeasure::cantor_product(0, 1.0, pt({0}), 1.0)});
  CHECK_THROWS_AS(DriftField::from_measure(cantor, std::nullopt), DomainError);
  const DriftField b3 = DriftField::from_measure(cantor, 3);
  CHECK(b3(pt({0.0}))(0) > 0.0);
  CHECK(b3(pt({0.0}))(0) <= b3.sup_norm());
}
