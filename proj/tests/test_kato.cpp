// Copyright (c) 2026, katolab contributors
// SPDX-License-Identifier: Apache-2.0

#include "katolab/kato_norms.hpp"
#include "katolab/kernels.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace katolab;

namespace {

Point pt(std::initializer_list<double> v) {
  Point p(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) p(i++) = x;
  return p;
}

}  // namespace

TEST_CASE("N of the zero measure vanishes") {
  const SignedMeasure z = SignedMeasure::zero(3);
  CHECK(kato_norm_N(z, 0.5, 1.0).value == 0.0);
  CHECK(lambda_norm(z, 0.5, TransitionKernel::exact_gaussian()).value == 0.0);
}

TEST_CASE("N of Lebesgue measure in d=3") {
  const SignedMeasure leb = SignedMeasure::constant(3, 1.0);
  for (double t : {0.01, 0.3, 1.0}) {
    for (double a : {0.25, 1.0, 3.0}) {
      const double expect = 2.0 * std::pow(std::numbers::pi / a, 1.5) * std::sqrt(t);
      const auto r = kato_norm_N(leb, t, a);
      CHECK_FALSE(r.diverging);
      CHECK_FALSE(r.outside_theory);
      CHECK(r.value == doctest::Approx(expect).epsilon(1e-8));
    }
  }
  CHECK(kato_norm_N(SignedMeasure::constant(1, 1.0), 1.0, 1.0).outside_theory);
}

TEST_CASE("Lambda of Lebesgue measure with the exact kernel is 2 sqrt(t)") {
  for (int d = 1; d <= 3; ++d) {
    const SignedMeasure leb = SignedMeasure::constant(d, 1.0);
    for (double t : {0.1, 0.7})
      CHECK(lambda_norm(leb, t, TransitionKernel::exact_gaussian()).value ==
            doctest::Approx(2.0 * std::sqrt(t)).epsilon(1e-8));
  }
}

TEST_CASE("Lambda with the exact kernel equals (2 pi)^{-d/2} N^{1/2}") {
  const SignedMeasure bump = SignedMeasure::gaussian_bump(1.0, 0.5, pt({0, 0, 0}));
  KatoOptions opt;
  opt.grid = {pt({0, 0, 0}), pt({0.3, 0.1, 0})};
  const double lam = lambda_norm(bump, 0.2, TransitionKernel::exact_gaussian(), opt).value;
  const double n = kato_norm_N(bump, 0.2, 0.5, opt).value;
  CHECK(lam == doctest::Approx(std::pow(2.0 * std::numbers::pi, -1.5) * n).epsilon(1e-10));
}

TEST_CASE("N is monotone in t and alpha and linear in the measure") {
  const SignedMeasure bump = SignedMeasure::gaussian_bump(1.0, 0.5, pt({0, 0, 0}));
  const SignedMeasure bump3 = SignedMeasure::gaussian_bump(3.0, 0.5, pt({0, 0, 0}));
  double prev = 0.0;
  for (double t : {0.025, 0.05, 0.1, 0.2, 0.4}) {
    const double v = kato_norm_N(bump, t, 0.5).value;
    CHECK(v >= prev);
    prev = v;
    CHECK(kato_norm_N(bump3, t, 0.5).value == doctest::Approx(3.0 * v).epsilon(1e-12));
  }
  double prev_a = 1e300;
  for (double a : {0.1, 0.25, 0.5, 1.0, 2.0}) {
    const double v = kato_norm_N(bump, 0.2, a).value;
    CHECK(v <= prev_a);
    prev_a = v;
  }
}

TEST_CASE("Kato vanishing on a dyadic t grid for the shipped measures") {
  const std::vector<SignedMeasure> shipped = {
      SignedMeasure::gaussian_bump(1.0, 0.5, pt({0, 0, 0})),
      SignedMeasure::linear(3, 0, 0.4, 6.0),
      SignedMeasure::cantor_product(0, 1.0, pt({0, 0, 0}), 1.0),
      SignedMeasure::radial_power(1.0, 0.5, 1.0, pt({0, 0, 0})),
  };
  for (const auto& m : shipped) {
    const SignedMeasure a = m.abs();
    double prev = 1e300;
    double last = 0.0;
    for (int k = 0; k < 8; ++k) {
      const double t = 0.5 * std::ldexp(1.0, -2 * k);
      const auto r = kato_norm_N(a, t, 0.5);
      CHECK_FALSE(r.diverging);
      CHECK(r.value <= prev * (1.0 + 1e-9));
      prev = r.value;
      last = r.value;
    }
    CHECK(last < 0.15 * kato_norm_N(a, 0.5, 0.5).value);
  }
}

TEST_CASE("Cantor N scales like t^{gamma/2}") {
  const SignedMeasure c = SignedMeasure::cantor_product(0, 1.0, pt({0, 0, 0}), 1.0);
  KatoOptions opt;
  opt.grid = {pt({0, 0.5, 0.5})};
  const double gamma = std::log(2.0) / std::log(3.0);
  // exact self-similarity at the endpoint: N_{t/9} = N_t / 2 while the kernel
  // window stays inside the cube in the flat coordinates
  const double n1 = kato_norm_N(c, 1e-4, 0.5, opt).value;
  const double n2 = kato_norm_N(c, 1e-4 / 9.0, 0.5, opt).value;
  CHECK(n2 / n1 == doctest::Approx(0.5).epsilon(2e-3));
  CHECK(std::log(n1 / n2) / std::log(9.0) == doctest::Approx(gamma / 2.0).epsilon(5e-3));
}

TEST_CASE("hyperplane is diagnosed as outside K_{d,1}") {
  const SignedMeasure plane = SignedMeasure::hyperplane(0, 0.5, 1.0, pt({0, 0, 0}), 1.0);
  const auto r = kato_norm_N(plane, 0.1, 0.5);
  CHECK(r.diverging);
  CHECK(std::isinf(r.value));
  const auto prof = kato_membership_profile(plane, {0.1, 0.01});
  CHECK_FALSE(prof.consistent);
}

TEST_CASE("envelope Lambda dominates with C4 e^{C5} N^{C6}") {
  const SignedMeasure bump = SignedMeasure::gaussian_bump(1.0, 0.5, pt({0, 0, 0}));
  const auto env = TransitionKernel::envelope(2.0, 1.0, 0.25);
  for (double t : {0.05, 0.2, 0.8}) {
    const double lam = lambda_norm(bump, t, env).value;
    const double n = kato_norm_N(bump, t, 0.25).value;
    CHECK(lam <= 2.0 * std::exp(1.0) * n * (1.0 + 1e-9));
  }
}

TEST_CASE("custom kernel Lambda reproduces the exact kernel") {
  const SignedMeasure bump = SignedMeasure::gaussian_bump(1.0, 0.5, pt({0}));
  KatoOptions opt;
  opt.grid = {pt({0.0}), pt({0.2})};
  opt.rel_tol = 1e-7;
  opt.integration.max_panels = 24;
  opt.integration.nodes_per_panel = 10;
  const auto custom = TransitionKernel::from_function(
      [](double s, const Point& x, const Point& y) { return gaussian_p(s, x, y); });
  const double a = lambda_norm(bump, 0.3, custom, opt).value;
  const double b = lambda_norm(bump, 0.3, TransitionKernel::exact_gaussian(), opt).value;
  CHECK(a == doctest::Approx(b).epsilon(1e-5));
}

TEST_CASE("membership profile: bounded density and Cantor scaling") {
  const SignedMeasure bump = SignedMeasure::gaussian_bump(2.0, 0.5, pt({0, 0, 0}));
  const std::vector<double> radii = {0.4, 0.2, 0.1, 0.05};
  const auto prof = kato_membership_profile(bump, radii);
  for (std::size_t i = 0; i < radii.size(); ++i)
    CHECK(prof.values[i] <= 2.0 * sphere_area(3) * radii[i] * (1.0 + 1e-9));
  CHECK(prof.consistent);
  CHECK(prof.fitted_exponent == doctest::Approx(1.0).epsilon(0.05));

  const SignedMeasure c = SignedMeasure::cantor_product(0, 1.0, pt({0, 0, 0}), 1.0);
  std::vector<double> cr;
  for (int k = 2; k <= 7; ++k) cr.push_back(std::pow(3.0, -k));
  const auto cprof = kato_membership_profile(c, cr);
  CHECK(cprof.consistent);
  CHECK(cprof.fitted_exponent > 0.5);
  CHECK(cprof.fitted_exponent < 0.75);

  std::ostringstream csv;
  cprof.write_csv(csv);
  CHECK(csv.str().rfind("r,value\r\n", 0) == 0);
}

TEST_CASE("L^p density with p > d has a vanishing profile") {
  // |y|^{-1/2} on the unit ball lies in L^p for p < 6
  const SignedMeasure f = SignedMeasure::radial_power(1.0, 0.5, 1.0, pt({0, 0, 0}));
  ProfileOptions opt;
  opt.grid = {pt({0, 0, 0}), pt({0.3, 0, 0})};
  const auto prof = kato_membership_profile(f, {0.5, 0.1, 0.02, 0.004}, opt);
  CHECK(prof.consistent);
  CHECK(prof.values.back() < 0.1 * prof.values.front());
}
