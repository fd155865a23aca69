// Copyright (c) 2026, katolab contributors
// SPDX-License-Identifier: Apache-2.0

#include "katolab/kernels.hpp"
#include "katolab/parametrix.hpp"
#include "katolab/quadrature.hpp"
#include "katolab/simulate.hpp"

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

Point e1(int d) {
  Point e = Point::Zero(d);
  e(0) = 1.0;
  return e;
}

SdeConfig config(DriftMeasure drift, double step, std::size_t paths, std::uint64_t seed = 7) {
  SdeConfig cfg;
  cfg.drift = std::move(drift);
  cfg.step = step;
  cfg.paths = paths;
  cfg.seed = seed;
  return cfg;
}

KatoOptions at(const Point& x) {
  KatoOptions k;
  k.grid = {x};
  return k;
}

// E[b(y + W_r)] for b = A exp(-|y - c|^2 / 2 w^2): the Gaussian product in closed form.
double smoothed_bump(double amp, double w2, const Point& c, const Point& y, double r) {
  const int d = static_cast<int>(y.size());
  return amp * std::pow(w2 / (w2 + r), 0.5 * d) * std::exp(-(y - c).squaredNorm() / (2.0 * (w2 + r)));
}

// int_0^t E[b(x + W_s)] ds and 2 int_{s1 < s2} E[b(x + W_s1) b(x + W_s2)] for the bump.
// The inner expectation given W_s1 = y is b(y) smoothed_bump(y, s2 - s1), again a
// Gaussian in y, so only the time integrals are numerical.
double bump_moment_oracle(double amp, double width, const Point& c, const Point& x, double t,
                          int n) {
  const int d = static_cast<int>(x.size());
  const double w2 = width * width;
  const QuadRule gl = gauss_legendre(80, 0.0, 1.0);
  double total = 0.0;
  for (std::size_t i = 0; i < gl.size(); ++i) {
    const double s1 = t * gl.nodes[i];
    if (n == 1) {
      total += t * gl.weights[i] * smoothed_bump(amp, w2, c, x, s1);
      continue;
    }
    for (std::size_t j = 0; j < gl.size(); ++j) {
      const double r = (t - s1) * gl.nodes[j];
      const double v = 1.0 / (1.0 / w2 + 1.0 / (w2 + r));
      const double coef = amp * amp * std::pow(w2 / (w2 + r), 0.5 * d);
      const double e = coef * std::pow(v / (v + s1), 0.5 * d) *
                       std::exp(-(x - c).squaredNorm() / (2.0 * (v + s1)));
      total += 2.0 * t * gl.weights[i] * (t - s1) * gl.weights[j] * e;
    }
  }
  return total;
}

// P(|x + W_r - y| < eps) in d = 3 by radial quadrature: the sphere average of the
// Gaussian at radius u is exp(-(rho^2 + u^2)/2r) sinh(rho u / r) r / (rho u).
double ball_oracle_d3(double rho, double eps, double r) {
  const QuadRule gl = gauss_legendre(200, 0.0, eps);
  double sum = 0.0;
  for (std::size_t i = 0; i < gl.size(); ++i) {
    const double u = gl.nodes[i];
    const double avg = rho == 0.0 ? std::exp(-u * u / (2.0 * r))
                                  : 0.5 * r / (rho * u) *
                                        (std::exp(-(rho - u) * (rho - u) / (2.0 * r)) -
                                         std::exp(-(rho + u) * (rho + u) / (2.0 * r)));
    sum += gl.weights[i] * 4.0 * std::numbers::pi * u * u * std::pow(2.0 * std::numbers::pi * r, -1.5) * avg;
  }
  return sum;
}

// P(Bin(n, p) <= k) by direct summation.
double binomial_cdf(std::size_t k, std::size_t n, double p) {
  double s = 0.0;
  for (std::size_t j = 0; j <= k; ++j)
    s += std::exp(std::lgamma(n + 1.0) - std::lgamma(j + 1.0) - std::lgamma(n - j + 1.0) +
                  j * std::log(p) + (n - j) * std::log1p(-p));
  return s;
}

}  // namespace

TEST_CASE("bookkeeping identity holds exactly and paths reproduce from the seed") {
  SdeConfig cfg = config(DriftMeasure::gaussian_bump(1.5, 0.5, Point::Zero(2), e1(2)), 0.01, 64);
  cfg.horizon = 0.5;
  const Point x = pt({0.2, -0.1});
  const PathEnsemble a = simulate_paths(cfg, x, 5);
  REQUIRE(a.paths() == 64);
  CHECK(a.times.front() == 0.0);
  CHECK(a.times.back() == doctest::Approx(0.5));
  for (std::size_t i = 0; i < a.paths(); ++i)
    for (std::size_t k = 0; k < a.times.size(); ++k) {
      const Point lhs = a.state(i, k) - x - a.w(i, k);
      CHECK((lhs - a.a(i, k)).lpNorm<Eigen::Infinity>() <= 1e-14);
    }
  const PathEnsemble b = simulate_paths(cfg, x, 5);
  CHECK(a.states == b.states);
  CHECK(a.brownian == b.brownian);
  cfg.seed = 8;
  const PathEnsemble c = simulate_paths(cfg, x, 5);
  CHECK(a.states != c.states);
}

TEST_CASE("drift-free paths have mean squared displacement d T") {
  SdeConfig cfg = config(DriftMeasure::zero(3), 0.05, 20000);
  cfg.horizon = 0.5;
  const Point x = pt({1.0, 0.0, -1.0});
  const PathEnsemble ens = simulate_paths(cfg, x, 10);
  const std::size_t k = ens.time_index(0.5);
  double s = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < ens.paths(); ++i) {
    const double v = (ens.state(i, k) - x).squaredNorm();
    s += v;
    s2 += v * v;
  }
  const EstimatorResult r = EstimatorResult::from_sums(s, s2, ens.paths());
  CHECK(std::abs(r.mean - 1.5) <= 3.0 * r.std_error);
  CHECK(r.ci95.first == doctest::Approx(r.mean - 1.96 * r.std_error));
}

TEST_CASE("constant drift translates the mean exactly") {
  const Point c = pt({1.0, -0.5});
  SdeConfig cfg = config(DriftMeasure::constant(c), 0.1, 20000);
  cfg.horizon = 1.0;
  const PathEnsemble ens = simulate_paths(cfg, Point::Zero(2), 10);
  const std::size_t k = ens.time_index(1.0);
  for (int comp = 0; comp < 2; ++comp) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < ens.paths(); ++i) {
      const double v = ens.state(i, k)(comp);
      s += v;
      s2 += v * v;
      CHECK(ens.a(i, k)(comp) == doctest::Approx(c(comp)).epsilon(1e-12));
    }
    const EstimatorResult r = EstimatorResult::from_sums(s, s2, ens.paths());
    CHECK(std::abs(r.mean - c(comp)) <= 3.0 * r.std_error);
  }
}

TEST_CASE("mollification levels of a Cantor drift couple ever more tightly") {
  const SignedMeasure cantor = SignedMeasure::cantor_product(0, 1.0, pt({-0.5, -0.5}), 1.0);
  SdeConfig cfg = config(DriftMeasure(2, {cantor, SignedMeasure::zero(2)}), 1.0 / 256.0, 200, 3);
  cfg.horizon = 0.25;
  cfg.mollify_level = 1;
  const auto levels = mollification_coupling(cfg, Point::Zero(2), {1, 2, 3});
  REQUIRE(levels.size() == 3);
  CHECK(levels[0].median > levels[1].median);
  CHECK(levels[1].median > levels[2].median);
  for (const auto& l : levels) {
    CHECK(l.q90 >= l.median);
    CHECK(std::isfinite(l.abs_integral_q90));
  }
}

TEST_CASE("step guard rejects steps coarser than the mollification scale") {
  const SignedMeasure cantor = SignedMeasure::cantor_product(0, 1.0, pt({-0.5, -0.5}), 1.0);
  SdeConfig cfg = config(DriftMeasure(2, {cantor, SignedMeasure::zero(2)}), 0.1, 10);
  cfg.mollify_level = 2;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  cfg.step = 1.0 / 16.0;
  CHECK_NOTHROW(cfg.validate());
  cfg.mollify_level.reset();
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  SdeConfig bad = config(DriftMeasure::zero(2), 0.1, 0);
  CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("moment quadrature matches the Gaussian product closed form") {
  const Point c = pt({0.1, 0.0, -0.2});
  const SignedMeasure bump = SignedMeasure::gaussian_bump(1.0, 0.5, c);
  const Point x = pt({0.0, 0.2, 0.0});
  for (double t : {0.1, 0.2}) {
    for (int n : {1, 2}) {
      const double oracle = bump_moment_oracle(1.0, 0.5, c, x, t, n);
      CHECK(brownian_moment_quadrature(bump, x, t, n) == doctest::Approx(oracle).epsilon(1e-6));
    }
  }
  CHECK(brownian_moment_quadrature(bump, x, 0.1, 0) == 1.0);
  CHECK_THROWS_AS(brownian_moment_quadrature(bump, x, 0.1, 3), DomainError);
}

TEST_CASE("moment estimates respect the bound and the quadrature oracle") {
  const Point x = Point::Zero(3);
  const SignedMeasure bump = SignedMeasure::gaussian_bump(1.0, 0.5, x);
  SdeConfig cfg = config(DriftMeasure::zero(3), 2e-3, 20000);
  const double t = 0.1;
  const auto m = estimate_moments(cfg, x, {0, 1, 2, 3, 4}, t, bump, TransitionKernel::exact_gaussian(), at(x));
  CHECK(m[0].estimate.mean == 1.0);
  CHECK(m[0].estimate.std_error == 0.0);
  for (const auto& e : m) {
    CHECK(e.estimate.mean <= e.bound + 3.0 * e.estimate.std_error);
    CHECK(e.estimate.std_error >= 0.0);
  }
  CHECK(m[1].bound == doctest::Approx(std::sqrt(t) * m[1].lambda_t));
  // left Riemann bias at this step is ~1% of the first moment
  CHECK(m[1].estimate.mean == doctest::Approx(bump_moment_oracle(1.0, 0.5, x, x, t, 1)).epsilon(0.03));
  const MomentEstimate single = estimate_moment(cfg, x, 2, t, bump, TransitionKernel::exact_gaussian(), at(x));
  CHECK(single.estimate.mean == m[2].estimate.mean);
  CHECK_THROWS_AS(estimate_moment(cfg, x, 7, t, bump), DomainError);
  CHECK_THROWS_AS(estimate_moment(cfg, x, 1, t, SignedMeasure::gaussian_bump(-1.0, 0.5, x)), DomainError);
}

TEST_CASE("Laplace transform: degenerate, constant and series cases") {
  const Point x = Point::Zero(3);
  const SignedMeasure bump = SignedMeasure::gaussian_bump(1.0, 0.5, x);
  SdeConfig cfg = config(DriftMeasure::zero(3), 5e-3, 20000);
  const double t = 0.1;

  const LaplaceEstimate zero = estimate_laplace(cfg, x, 0.0, t, bump, TransitionKernel::exact_gaussian(), at(x));
  CHECK(zero.estimate.mean == 1.0);

  const double beta = 2.0;
  const LaplaceEstimate flat = estimate_laplace(cfg, x, 1.5, t, SignedMeasure::constant(3, beta),
                                                TransitionKernel::exact_gaussian(), at(x));
  CHECK(flat.estimate.mean == doctest::Approx(std::exp(1.5 * beta * t)).epsilon(1e-12));
  CHECK(flat.estimate.mean <= flat.bound_simple);
  CHECK(flat.estimate.mean <= flat.bound_sharp);

  const double lambda = 0.5;
  const LaplaceEstimate lap = estimate_laplace(cfg, x, lambda, t, bump, TransitionKernel::exact_gaussian(), at(x));
  const auto m = estimate_moments(cfg, x, {0, 1, 2, 3, 4}, t, bump, TransitionKernel::exact_gaussian(), at(x));
  double series = 0.0, var = 0.0;
  for (int n = 0; n <= 4; ++n) {
    const double coef = std::pow(lambda, n) / std::tgamma(n + 1.0);
    series += coef * m[n].estimate.mean;
    var += coef * coef * m[n].estimate.std_error * m[n].estimate.std_error;
  }
  CHECK(std::abs(lap.estimate.mean - series) <= 3.0 * (lap.estimate.std_error + std::sqrt(var)));
  CHECK(lap.estimate.mean <= lap.bound_simple + 3.0 * lap.estimate.std_error);
  CHECK(lap.estimate.mean <= lap.bound_sharp + 3.0 * lap.estimate.std_error);

  CHECK_THROWS_AS(estimate_laplace(cfg, x, 1e5, t, bump), RefusalError);
}

TEST_CASE("sup tail: exact zero, monotone events, rule of three") {
  const Point x = Point::Zero(3);
  SdeConfig cfg = config(DriftMeasure::gaussian_bump(1.0, 0.5, x, e1(3)), 1e-3, 4000);
  // |A_s| <= s sup|b| = 0.1
  const TailEstimate none = sup_A_tail(cfg, x, 0.1, 0.1);
  CHECK(none.exact_zero);
  CHECK(none.estimate.mean == 0.0);

  double previous = 1.0;
  for (double delta : {0.01, 0.03, 0.06, 0.09}) {
    const TailEstimate tail = sup_A_tail(cfg, x, delta, 0.1);
    CHECK_FALSE(tail.exact_zero);
    CHECK(tail.estimate.mean <= previous);
    CHECK(tail.upper95 >= tail.estimate.mean);
    previous = tail.estimate.mean;
  }

  double prev_eps = 1.0;
  for (double eps : {0.2, 0.1, 0.05}) {
    const TailEstimate tail = sup_A_tail(cfg, x, 0.04, eps);
    CHECK(tail.estimate.mean <= prev_eps + 3.0 * tail.estimate.std_error);
    prev_eps = tail.estimate.mean;
  }

  // just below the pathwise bound: the drift must stay near its peak
  const TailEstimate rare = sup_A_tail(cfg, x, 0.0999, 0.1);
  CHECK(rare.exceedances == 0);
  CHECK(rare.rare_event);
  CHECK(rare.upper95 == doctest::Approx(3.0 / 4000.0));
  CHECK(sup_A_tail(config(DriftMeasure::zero(3), 1e-3, 10), x, 1e-9, 0.1).exact_zero);
}

TEST_CASE("binomial upper bound inverts the binomial distribution") {
  CHECK(binomial_upper95(0, 300) == doctest::Approx(0.01));
  CHECK(binomial_upper95(10, 10) == 1.0);
  for (auto [k, n] : {std::pair<std::size_t, std::size_t>{1, 50}, {5, 50}, {40, 1000}}) {
    double lo = static_cast<double>(k) / n, hi = 1.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (binomial_cdf(k, n, mid) > 0.05 ? lo : hi) = mid;
    }
    CHECK(binomial_upper95(k, n) == doctest::Approx(lo).epsilon(1e-9));
  }
}

TEST_CASE("ball probability: closed form, radial quadrature and Monte Carlo") {
  const Point x = Point::Zero(3);
  for (auto [rho, eps, r] : {std::tuple{0.0, 0.3, 0.1}, {0.5, 0.3, 0.1}, {1.0, 0.5, 0.25}}) {
    const Point y = rho * e1(3);
    CHECK(gaussian_ball_probability(x, y, eps, r) ==
          doctest::Approx(ball_oracle_d3(rho, eps, r)).epsilon(1e-10));
  }
  double previous = 0.0;
  for (double r : {0.1, 0.01, 1e-3, 1e-4}) {
    const double p = gaussian_ball_probability(x, x, 0.1, r);
    CHECK(p > previous);
    previous = p;
  }
  CHECK(previous > 1.0 - 1e-12);

  SdeConfig free = config(DriftMeasure::zero(3), 0.01, 20000);
  const Point y = pt({0.3, 0.0, 0.1});
  const BallEstimate b = ball_probability(free, x, y, 0.3, 0.1);
  CHECK(std::abs(b.probability.estimate.mean - b.gaussian_probability) <=
        3.0 * b.probability.estimate.std_error);
  CHECK(b.n_kato == 0.0);
  CHECK(b.lower_bound <= b.gaussian_probability);

  SdeConfig bump = config(DriftMeasure::gaussian_bump(1.0, 0.5, x, e1(3)), 0.005, 20000);
  const BallEstimate bb = ball_probability(bump, x, y, 0.3, 0.05, {}, at(x));
  CHECK(bb.n_kato > 0.0);
  CHECK(bb.probability.estimate.mean >= bb.lower_bound - 3.0 * bb.probability.estimate.std_error);
  CHECK(bb.best_delta >= 0.0);
  CHECK(bb.best_delta < 0.3);
}

TEST_CASE("kernel density estimate matches smoothed Gaussian densities") {
  // E[kde] at bandwidth h is the Gaussian density at time t + h^2.
  SdeConfig cfg = config(DriftMeasure::zero(1), 0.05, 40000);
  cfg.horizon = 0.5;
  const Point x = pt({0.0}), y = pt({0.4});
  const PathEnsemble ens = simulate_paths(cfg, x, 10);
  const KdeEstimate k = kde_density(ens, 0.5, y);
  CHECK(k.bandwidth > 0.0);
  CHECK_FALSE(k.flagged);
  const double h2 = k.bandwidth * k.bandwidth;
  CHECK(std::abs(k.estimate.mean - gaussian_p(0.5 + h2, x, y)) <= 3.0 * k.estimate.std_error);
  CHECK(std::abs(k.estimate.mean - gaussian_p(0.5, x, y)) <= 3.0 * k.estimate.std_error + h2);

  SdeConfig shifted = config(DriftMeasure::constant(pt({0.8})), 0.05, 40000);
  shifted.horizon = 0.5;
  const KdeEstimate ks = kde_density(simulate_paths(shifted, x, 10), 0.5, y, k.bandwidth);
  CHECK(std::abs(ks.estimate.mean - gaussian_p(0.5 + h2, pt({0.4}), y)) <= 3.0 * ks.estimate.std_error);

  CHECK_THROWS_AS(kde_density(ens, 0.123, y), DomainError);
  const KdeEstimate far = kde_density(ens, 0.5, pt({6.0}));
  CHECK(far.flagged);
}

TEST_CASE("kernel density estimate agrees with the series for a bump drift") {
  const Point x = pt({0.0}), y = pt({0.3});
  const DriftMeasure drift = DriftMeasure::gaussian_bump(1.0, 0.5, x, e1(1));
  SdeConfig cfg = config(drift, 1e-3, 40000);
  cfg.horizon = 0.25;
  const PathEnsemble ens = simulate_paths(cfg, x, 50);
  const KdeEstimate k = kde_density(ens, 0.25, y);
  SeriesConfig sc;
  sc.drift = drift;
  sc.t_max_policy = TmaxPolicy::Flag;
  sc.c_delta = 0.06;
  sc.kato.grid = {x};
  sc.quad.budget = 1e6;
  sc.max_terms = 10;
  const HeatKernelEstimate q = heat_kernel(0.25, x, y, sc, 1e-5);
  const double bias = std::abs(k.at_half - k.estimate.mean) + std::abs(k.at_double - k.estimate.mean);
  CHECK(std::abs(k.estimate.mean - q.value) <= 3.0 * k.estimate.std_error + bias);
}

TEST_CASE("Chapman lower bound in the drift-free case") {
  SdeConfig cfg = config(DriftMeasure::zero(3), 0.01, 20000);
  const Point x = Point::Zero(3), y = pt({0.5, 0.0, 0.0});
  SeriesConfig sc;
  const ChapmanReport rep = chapman_lower_bound(0.25, 0.5, 0.2, x, y, cfg, sc);
  CHECK(rep.pass);
  CHECK(rep.q == doctest::Approx(gaussian_p(0.25, x, y)).epsilon(1e-14));
  // the inf over the sphere sits at the boundary: |z - y| = eps
  CHECK(rep.inf_q == doctest::Approx(gaussian_p(0.125, x, pt({0.2, 0.0, 0.0}))).epsilon(1e-12));
  const double exact = rep.inf_q * gaussian_ball_probability(x, y, 0.2, 0.125);
  CHECK(exact <= rep.q);
  CHECK(std::abs(rep.product - exact) <= 3.0 * rep.product_stderr);
  const ChapmanReport tiny = chapman_lower_bound(0.25, 0.5, 1e-3, x, y, cfg, sc);
  CHECK(tiny.product < 1e-3 * rep.product);
  CHECK(tiny.pass);
  CHECK_THROWS_AS(chapman_lower_bound(0.25, 1.0, 0.2, x, y, cfg, sc), DomainError);
}

TEST_CASE("halving the step leaves smooth-drift statistics within the noise") {
  const Point x = pt({0.2, 0.0});
  SdeConfig cfg = config(DriftMeasure::gaussian_bump(1.0, 0.5, Point::Zero(2), e1(2)), 0.02, 20000);
  cfg.horizon = 0.4;
  auto mean_x1 = [&](double step) {
    cfg.step = step;
    const PathEnsemble ens = simulate_paths(cfg, x, 1000);
    const std::size_t k = ens.time_index(0.4);
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < ens.paths(); ++i) {
      const double v = ens.state(i, k)(0);
      s += v;
      s2 += v * v;
    }
    return EstimatorResult::from_sums(s, s2, ens.paths());
  };
  const EstimatorResult a = mean_x1(0.02), b = mean_x1(0.01);
  CHECK(std::abs(a.mean - b.mean) <= 3.0 * std::hypot(a.std_error, b.std_error));
}

TEST_CASE("ensemble CSV and estimator JSON records") {
  SdeConfig cfg = config(DriftMeasure::constant(pt({1.0, 0.0})), 0.5, 2);
  cfg.horizon = 1.0;
  const PathEnsemble ens = simulate_paths(cfg, Point::Zero(2));
  std::ostringstream out;
  ens.write_csv(out);
  const std::string csv = out.str();
  CHECK(csv.rfind("path_id,t,X1,X2,W1,W2,A1,A2\r\n", 0) == 0);
  std::size_t rows = 0;
  for (char ch : csv) rows += ch == '\n';
  CHECK(rows == 1 + 2 * 3);

  EstimatorResult r;
  r.mean = 0.5;
  r.std_error = 0.1;
  r.ci95 = {0.304, 0.696};
  r.n_samples = 2;
  const auto j = estimator_record("moment", r, cfg, {{"power", 2}});
  CHECK(j["estimator"] == "moment");
  CHECK(j["result"]["stderr"] == 0.1);
  CHECK(j["seed"] == cfg.seed);
  CHECK(j["power"] == 2);
  CHECK(j["config"]["paths"] == 2);
}
