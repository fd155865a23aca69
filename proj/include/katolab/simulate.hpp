// Copyright (c) 2026, katolab contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Euler-Maruyama simulation of X = x + W + A with A_t = int_0^t b(X_s) ds for a
// density or mollified drift b, and Monte Carlo estimators of drift functionals.
//
// On the grid t_k = k h:
//   W_{k+1} = W_k + sqrt(h) xi_k,  A_{k+1} = A_k + h b(X_k),  X_k = x + W_k + A_k.
// Path i draws its increments from make_stream(seed, i).

#include "katolab/kato_norms.hpp"
#include "katolab/measures.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

namespace katolab {

struct SeriesConfig;

struct SdeConfig {
  DriftMeasure drift;
  /// Empty evaluates density components directly.
  std::optional<int> mollify_level;
  double step = 1e-3;
  double horizon = 1.0;
  std::size_t paths = 10000;
  std::uint64_t seed = 1;
  /// Reject step > 2^{-2n} at mollification level n.
  bool step_guard = true;
  IntegrationOptions integration;

  void validate() const;
  int dimension() const { return drift.dimension(); }
  /// Number of Euler steps to reach t; the step is shortened so that t is on the grid.
  int steps_to(double t) const;
  nlohmann::json to_json() const;
};

struct PathEnsemble {
  int dimension = 0;
  std::vector<double> times;
  std::vector<std::size_t> path_ids;  ///< surviving paths
  std::size_t failed = 0;             ///< paths whose drift evaluation was not finite
  /// Row-major [path][time]; entry (i, k) lives at i * times.size() + k.
  std::vector<Point> states;
  std::vector<Point> brownian;
  std::vector<Point> drift_part;

  std::size_t paths() const { return path_ids.size(); }
  const Point& state(std::size_t i, std::size_t k) const { return states[i * times.size() + k]; }
  const Point& w(std::size_t i, std::size_t k) const { return brownian[i * times.size() + k]; }
  const Point& a(std::size_t i, std::size_t k) const { return drift_part[i * times.size() + k]; }
  /// Index of the recorded time closest to t; throws if none is within 1e-9.
  std::size_t time_index(double t) const;
  /// Columns (path_id, t, X1.., W1.., A1..).
  void write_csv(std::ostream& out) const;
};

/// Records every `record_every`-th grid time (and always the horizon).
PathEnsemble simulate_paths(const SdeConfig& cfg, const Point& x, int record_every = 1);

struct EstimatorResult {
  double mean = 0.0;
  double std_error = 0.0;
  std::pair<double, double> ci95{0.0, 0.0};  ///< mean -/+ 1.96 std_error
  std::size_t n_samples = 0;

  static EstimatorResult from_sums(double sum, double sum_sq, std::size_t n);
  nlohmann::json to_json() const;
};

/// Monte Carlo record with the configuration echo used by the CLI.
nlohmann::json estimator_record(const std::string& name, const EstimatorResult& r,
                                const SdeConfig& cfg, const nlohmann::json& extra = {});

struct MomentEstimate {
  EstimatorResult estimate;
  double lambda_t = 0.0;  ///< Lambda_t(b) of the functional
  double bound = 0.0;     ///< n! alpha_n (sqrt(t) Lambda_t(b))^n
  std::size_t failed = 0;
};

/// E_x[(int_0^t b(X_s) ds)^n] for a nonnegative density functional b, left
/// Riemann sums on the Euler grid. Lambda_t uses `kernel`; the exact Gaussian
/// kernel is the right one when cfg.drift is zero.
MomentEstimate estimate_moment(const SdeConfig& cfg, const Point& x, int n_power, double t,
                               const SignedMeasure& functional,
                               const TransitionKernel& kernel = TransitionKernel::exact_gaussian(),
                               const KatoOptions& kato = {});

/// All powers in one pass over shared paths.
std::vector<MomentEstimate> estimate_moments(const SdeConfig& cfg, const Point& x,
                                             const std::vector<int>& powers, double t,
                                             const SignedMeasure& functional,
                                             const TransitionKernel& kernel = TransitionKernel::exact_gaussian(),
                                             const KatoOptions& kato = {});

/// Deterministic value of E_x[(int_0^t b(x + W_s) ds)^n], n <= 2, by nested
/// Gauss-Hermite quadrature over the Brownian positions and Gauss-Legendre in time.
double brownian_moment_quadrature(const SignedMeasure& functional, const Point& x, double t,
                                  int n_power, int time_nodes = 24, int space_nodes = 8);

struct LaplaceEstimate {
  EstimatorResult estimate;
  double lambda_t = 0.0;
  double bound_sharp = 0.0;   ///< (1 + lambda sqrt(t) Lambda) exp(lambda^2 t Lambda^2)
  double bound_simple = 0.0;  ///< 2 exp(2 lambda^2 t Lambda^2)
  std::size_t failed = 0;
};

/// E_x[exp(lambda int_0^t b(X_s) ds)]; refuses when lambda t sup b exceeds 600.
LaplaceEstimate estimate_laplace(const SdeConfig& cfg, const Point& x, double lambda, double t,
                                 const SignedMeasure& functional,
                                 const TransitionKernel& kernel = TransitionKernel::exact_gaussian(),
                                 const KatoOptions& kato = {});

struct TailEstimate {
  EstimatorResult estimate;
  std::size_t exceedances = 0;
  /// One-sided 95% upper bound: 3/n with no exceedance, Clopper-Pearson otherwise.
  double upper95 = 0.0;
  bool rare_event = false;   ///< fewer than 10 exceedances
  bool exact_zero = false;   ///< delta beyond eps sup|b|: no path can exceed
  std::size_t failed = 0;
};

/// P_x(sup_{s <= eps} |A_s| > delta) for the dynamics drift.
TailEstimate sup_A_tail(const SdeConfig& cfg, const Point& x, double delta, double eps);

/// One-sided 95% upper confidence bound for a binomial proportion.
double binomial_upper95(std::size_t k, std::size_t n);
/// One-sided 95% lower confidence bound (Clopper-Pearson); 0 with no successes.
double binomial_lower95(std::size_t k, std::size_t n);

/// P_x(inside(s, X_s) at every grid time s in [0, horizon]). `inside` must be
/// safe to call concurrently. exceedances counts the paths that stay inside.
TailEstimate stays_inside(const SdeConfig& cfg, const Point& x, double horizon,
                          const std::function<bool(double, const Point&)>& inside);

struct BallEstimate {
  TailEstimate probability;
  /// sup over delta in (0, eps) of the Gaussian-ball minus A-tail lower bound.
  double lower_bound = 0.0;
  double best_delta = 0.0;
  /// N_r^{C6}(sum_i |mu_i|) used in the tail term.
  double n_kato = 0.0;
  /// P(|x + W_r - y| < eps) for the drift-free process.
  double gaussian_probability = 0.0;
};

/// Envelope constants (C4, C5, C6) of the transition density bound.
struct EnvelopeConstants {
  double c4 = 2.0;
  double c5 = 1.0;
  double c6 = 0.25;
};

BallEstimate ball_probability(const SdeConfig& cfg, const Point& x, const Point& y, double eps,
                              double r, const EnvelopeConstants& env = {},
                              const KatoOptions& kato = {});

/// P(|x + W_r - y| < eps) through the noncentral chi-square distribution.
double gaussian_ball_probability(const Point& x, const Point& y, double eps, double r);

struct KdeEstimate {
  EstimatorResult estimate;
  double bandwidth = 0.0;
  double at_half = 0.0;    ///< estimate with bandwidth / 2
  double at_double = 0.0;  ///< estimate with 2 bandwidth
  std::size_t near_samples = 0;  ///< samples within 2 bandwidths of y
  bool flagged = false;          ///< fewer than 20 near samples
};

/// Gaussian-kernel density of X_t at y; bandwidth <= 0 selects the Silverman rule.
KdeEstimate kde_density(const PathEnsemble& ens, double t, const Point& y, double bandwidth = 0.0);

struct ChapmanReport {
  double inf_q = 0.0;  ///< min of q(eta t, z, y) over a grid on B(y, eps)
  BallEstimate ball;   ///< P_x(X_{(1-eta)t} in B(y, eps))
  double product = 0.0;
  double product_stderr = 0.0;
  double q = 0.0;      ///< q(t, x, y)
  double q_error = 0.0;
  bool pass = false;   ///< product - 3 stderr <= q + q_error
};

/// Chapman-Kolmogorov lower bound with q from the series (drift-free: closed form).
ChapmanReport chapman_lower_bound(double t, double eta, double eps, const Point& x,
                                  const Point& y, const SdeConfig& cfg,
                                  const SeriesConfig& series, double tol = 1e-3);

/// Per-level statistics of max_t |A^{(n+1)}_t - A^{(n)}_t| on shared increments.
struct CouplingLevel {
  int level = 0;
  double median = 0.0;
  double q90 = 0.0;
  /// Quantiles 0.5 and 0.9 of int_0^T |b^{(n)}(X_s)| ds.
  double abs_integral_median = 0.0;
  double abs_integral_q90 = 0.0;
};

std::vector<CouplingLevel> mollification_coupling(const SdeConfig& cfg, const Point& x,
                                                  const std::vector<int>& levels);

}  // namespace katolab
