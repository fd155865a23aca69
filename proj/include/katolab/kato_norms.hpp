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

// Kato norms of nonnegative measures:
//   N_t^a(mu)   = sup_x int_0^t s^{-(d+1)/2} int exp(-a|x-y|^2/s) mu(dy) ds
//   Lambda_t(mu) = sup_x int_0^t s^{-1/2} int q(s,x,y) mu(dy) ds
// and the ball profile r -> sup_x int_{|x-y|<=r} mu(dy)/|x-y|^{d-1}.

#include "katolab/measures.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

namespace katolab {

struct KatoOptions {
  /// Sup grid; empty selects default_sup_grid.
  std::vector<Point> grid;
  int grid_per_dim = 7;
  double rel_tol = 1e-9;
  int max_panels = 90;
  int nodes_per_panel = 8;
  IntegrationOptions integration;
};

struct KatoNormResult {
  double value = 0.0;
  Point argmax;
  double error = 0.0;
  /// The time integral failed to converge at some grid point: the measure is
  /// not in K_{d,1} at this resolution. value is then +inf.
  bool diverging = false;
  /// d < 3: computed, but outside the dimension range of the theory.
  bool outside_theory = false;
};

/// Effective box of mu plus three kernel standard deviations sqrt(t/(2 alpha)).
std::vector<Point> default_sup_grid(const SignedMeasure& mu, double t, double alpha,
                                    int per_dim = 7);

/// Value of the x-integrand of N_t^alpha at a single point.
KatoNormResult kato_norm_N_at(const SignedMeasure& mu, double t, double alpha, const Point& x,
                              const KatoOptions& opt = {});

KatoNormResult kato_norm_N(const SignedMeasure& mu, double t, double alpha,
                           const KatoOptions& opt = {});

/// Transition kernel used inside Lambda_t.
struct TransitionKernel {
  enum class Mode { ExactGaussian, Envelope, Custom };
  Mode mode = Mode::ExactGaussian;
  /// Envelope C4 e^{C5 s} s^{-d/2} exp(-C6 |x-y|^2 / s).
  double c4 = 2.0;
  double c5 = 1.0;
  double c6 = 0.25;
  /// Custom q(s, x, y); integrated against mu over a window of `custom_radius` * sqrt(s).
  std::function<double(double, const Point&, const Point&)> custom;
  double custom_radius = 7.0;

  static TransitionKernel exact_gaussian() { return {}; }
  static TransitionKernel envelope(double c4, double c5, double c6);
  static TransitionKernel from_function(std::function<double(double, const Point&, const Point&)> q);
};

KatoNormResult lambda_norm(const SignedMeasure& mu, double t, const TransitionKernel& kernel,
                           const KatoOptions& opt = {});

struct KatoProfile {
  std::vector<double> radii;   ///< decreasing
  std::vector<double> values;  ///< sup over the grid at each radius
  /// Values finite, nonincreasing as r decreases, and the last value below
  /// threshold * (first value).
  bool consistent = false;
  /// Least-squares slope of log value against log r over positive values.
  double fitted_exponent = 0.0;
  bool outside_theory = false;

  void write_csv(std::ostream& out) const;
};

struct ProfileOptions {
  std::vector<Point> grid;  ///< empty: the measure's suggested grid
  int grid_per_dim = 7;
  double threshold = 0.25;
  double monotone_tol = 1e-6;
  IntegrationOptions integration;
};

KatoProfile kato_membership_profile(const SignedMeasure& mu, const std::vector<double>& radii,
                                    const ProfileOptions& opt = {});

}  // namespace katolab
