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

// Small-time experiments: t log q(t,x,y) against -|x-y|^2/2, the path energy
// I(f) = (1/2) int_0^1 |f'|^2 and tube probabilities of the rescaled process
// X_{eps t}, and the tail of the drift part sup_{t<=1} |A_{eps t}|.

#include "katolab/parametrix.hpp"
#include "katolab/simulate.hpp"

#include <json.hpp>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace katolab {

struct PiecewiseLinearPath {
  std::vector<double> knots;  ///< strictly increasing, 0 = first < ... < last = 1
  std::vector<Point> values;

  void validate() const;
  int dimension() const { return values.empty() ? 0 : static_cast<int>(values.front().size()); }
  Point at(double t) const;

  static PiecewiseLinearPath constant(const Point& x);
  static PiecewiseLinearPath line(const Point& x, const Point& y);

  nlohmann::json to_json() const;
  static PiecewiseLinearPath from_json(const nlohmann::json& j);
};

/// sum_i |f_{i+1} - f_i|^2 / (2 (t_{i+1} - t_i)). Knot gaps below 1e-14 are rejected.
double rate_function(const PiecewiseLinearPath& f);

struct TubeInfimum {
  double value = 0.0;
  PiecewiseLinearPath minimizer;
  int sweeps = 0;
  bool converged = false;
};

/// min I(g) over paths g with g(0) = f(0) and |g(t_i) - f(t_i)| <= rho at
/// `knots` uniform times, linear in between. Block coordinate descent: each knot
/// update is the exact minimizer, a weighted neighbour average projected onto
/// the rho-ball.
TubeInfimum tube_rate_infimum(const PiecewiseLinearPath& f, double rho, int knots = 50,
                              double tol = 1e-13, int max_sweeps = 500000);

enum class DensityMode { Parametrix, Kde };

struct VaradhanConfig {
  DensityMode mode = DensityMode::Parametrix;
  /// Parametrix mode: drift, quadrature and T_delta policy.
  SeriesConfig series;
  double series_tol = 1e-3;
  /// Kde mode: dynamics; the horizon is set to each t in turn.
  SdeConfig sde;
  double bandwidth = 0.0;
  /// Points whose relative density error exceeds this are excluded.
  double max_relative_error = 0.1;
};

struct Extrapolation {
  double limit = 0.0;
  double error = 0.0;
  double slope_tlogt = 0.0;
  double slope_t = 0.0;
  bool ok = false;
};

/// Fits a + b t log t + c t through the three smallest t and returns a.
Extrapolation extrapolate_limit(const std::vector<double>& t, const std::vector<double>& values,
                                const std::vector<double>& errors);

struct AsymptoticCurve {
  std::vector<double> t_grid;  ///< decreasing
  std::vector<double> values;  ///< t log q
  std::vector<double> errors;  ///< t * (density error / density)
  /// -|x-y|^2/2 - (d/2) t log(2 pi t), the drift-free value.
  std::vector<double> reference;
  std::vector<bool> reliable;
  std::vector<std::string> notes;
  Extrapolation limit;
  double target = 0.0;  ///< -|x-y|^2/2

  /// Columns (t, tlogq, err, reference) over the reliable points.
  void write_csv(std::ostream& out) const;
  nlohmann::json to_json() const;
};

AsymptoticCurve varadhan_curve(const Point& x, const Point& y, const std::vector<double>& t_grid,
                               const VaradhanConfig& cfg);

struct TubeRow {
  double epsilon = 0.0;
  TailEstimate hits;  ///< exceedances counts paths inside the tube
  double eps_log = 0.0;
  double eps_log_lo = 0.0;
  double eps_log_hi = 0.0;
  /// No path stayed inside: only the upper bound is informative.
  bool below_resolution = false;
};

struct TubeTable {
  std::vector<TubeRow> rows;
  double rho = 0.0;
  double reference = 0.0;  ///< -inf of I over the tube
  TubeInfimum tube;

  /// Columns (epsilon, estimate, lo, hi, reference) on the eps log scale.
  void write_csv(std::ostream& out) const;
  nlohmann::json to_json() const;
};

/// P_x(sup_{t<=1} |X_{eps t} - f(t)| < rho) on the Euler grid, per eps.
TubeTable ldp_tube_experiment(const Point& x, const PiecewiseLinearPath& f, double rho,
                              const std::vector<double>& eps_grid, const SdeConfig& cfg,
                              int tube_knots = 50);

struct EquivalenceRow {
  double epsilon = 0.0;
  TailEstimate tail;
  double eps_log = 0.0;        ///< -inf when no path exceeds
  double eps_log_lo = 0.0;
  double eps_log_upper = 0.0;  ///< eps log of the one-sided 95% upper bound
  double n_kato = 0.0;         ///< N_eps^{C6}(sum_i |mu_i|)
  double bound = 0.0;          ///< 2 exp(-delta^2 / (8 eps C4^2 e^{2 C5} N^2))
  bool bound_holds = false;    ///< estimate <= bound + 3 stderr
};

struct EquivalenceTable {
  std::vector<EquivalenceRow> rows;
  double delta = 0.0;
  /// eps_log_upper strictly decreases along the eps grid.
  bool decreasing = false;

  /// Columns (epsilon, estimate, lo, hi, reference) on the eps log scale.
  void write_csv(std::ostream& out) const;
  nlohmann::json to_json() const;
};

EquivalenceTable exp_equivalence_diag(const Point& x, double delta,
                                      const std::vector<double>& eps_grid, const SdeConfig& cfg,
                                      const EnvelopeConstants& env = {},
                                      const KatoOptions& kato = {});

}  // namespace katolab
