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

// Drift measures on R^d: densities, self-similar Cantor products, hyperplane
// surface measures and weighted sums of these, together with the dyadic
// mollifier phi_n and the pointwise drift fields b^(n) = phi_n * mu.

#include "katolab/rng.hpp"
#include "katolab/types.hpp"

#include <json.hpp>

#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace katolab {

using ScalarFunction = std::function<double(const Point&)>;

/// Axis-aligned box; infinite bounds denote an unbounded side.
struct Box {
  Point lo;
  Point hi;

  static Box unbounded(int d);
  static Box cube(const Point& center, double half_width);

  int dimension() const { return static_cast<int>(lo.size()); }
  bool bounded() const;
  bool empty() const;
  Box intersect(const Box& other) const;
  Box expanded(double margin) const;
  bool contains(const Box& inner) const;
  bool contains(const Point& p) const;
  double volume() const;
};

/// Rule sizes shared by the spatial integrators.
struct IntegrationOptions {
  int nodes_per_panel = 6;
  int max_panels = 6;     ///< composite Gauss-Legendre panels per axis
  int hermite_nodes = 12; ///< Gauss-Hermite nodes per axis for Gaussian weights
  double window_sigmas = 8.5;
  int max_cantor_depth = 36;
};

class SignedMeasure {
 public:
  enum class Kind { Density, CantorProduct, Hyperplane, WeightedSum };

  /// Zero measure.
  SignedMeasure();

  /// Absolutely continuous measure f(y) dy. `support` may be unbounded (integration
  /// is then windowed by the integrand); `effective` bounds where f is not
  /// negligible and drives default sup grids. `sup_abs` bounds |f| when known.
  static SignedMeasure density(int d, ScalarFunction f, Box support, Box effective,
                               std::optional<double> sup_abs, nlohmann::json description);

  static SignedMeasure zero(int d);
  static SignedMeasure constant(int d, double value);
  /// amplitude * exp(-|y - center|^2 / (2 width^2)).
  static SignedMeasure gaussian_bump(double amplitude, double width, const Point& center);
  /// coefficient * clamp(y_coordinate, -clip, clip): one component of a clipped linear drift.
  static SignedMeasure linear(int d, int coordinate, double coefficient, double clip);
  /// amplitude * |y - center|^{-exponent} on |y - center| <= radius.
  static SignedMeasure radial_power(double amplitude, double exponent, double radius,
                                    const Point& center);

  /// weight * (middle-thirds Cantor measure of unit mass along `axis`, affinely
  /// placed on [lo_axis, lo_axis + side]) x (Lebesgue on the other coordinates),
  /// restricted to the cube [lo, lo + side].
  static SignedMeasure cantor_product(int axis, double weight, const Point& lo, double side);

  /// weight * surface measure of {y_axis = offset} restricted to the cube [lo, lo + side].
  static SignedMeasure hyperplane(int axis, double offset, double weight, const Point& lo,
                                  double side);

  static SignedMeasure weighted_sum(std::vector<std::pair<double, SignedMeasure>> terms);

  int dimension() const;
  Kind kind() const;

  /// Total-variation measure |mu|. For a sum mixing non-density terms this is
  /// sum |c_i| |mu_i|, an upper bound that is exact for disjoint supports.
  SignedMeasure abs() const;
  bool tv_is_exact() const;
  bool is_nonnegative() const;

  /// Pointwise density value; only for measures made of densities.
  bool has_density() const;
  double density_at(const Point& y) const;
  std::optional<double> sup_abs_density() const;

  /// Region outside which the measure is zero or negligible.
  Box effective_box() const;

  /// Integral of g against the measure over the window (bounded).
  double integrate(const ScalarFunction& g, const Box& window,
                   const IntegrationOptions& opt = {}) const;

  /// Integral of exp(-precision |x - y|^2) against the measure.
  double gaussian_integral(const Point& x, double precision,
                           const IntegrationOptions& opt = {}) const;

  /// Integral of |x - y|^{-(d-1)} over the ball |x - y| <= r (infinite when the
  /// measure charges a set too large for the radial singularity).
  double kato_ball_integral(const Point& x, double r, const IntegrationOptions& opt = {}) const;

  /// Mollification phi_n * mu at x.
  double mollify(int level, const Point& x, const IntegrationOptions& opt = {}) const;

  /// mu(cube) for nonnegative measures.
  double mass_in(const Box& cube, const IntegrationOptions& opt = {}) const;

  /// Samples distributed as |mu| restricted to the cube.
  std::vector<Point> sample(std::size_t n, const Box& cube, Rng& rng) const;

  /// Default grid for sup over x: the effective box plus `margin`, with
  /// `per_dim` points per axis (self-similar measures add their natural points).
  std::vector<Point> suggested_sup_grid(double margin, int per_dim) const;

  nlohmann::json to_json() const;
  static SignedMeasure from_json(const nlohmann::json& j, int d);

  struct Impl;

 private:
  explicit SignedMeasure(std::shared_ptr<const Impl> impl);
  std::shared_ptr<const Impl> impl_;
};

/// JSON array of the coordinates.
nlohmann::json point_json(const Point& p);
/// Throws SchemaError unless j is an array of d numbers.
Point point_from_json(const nlohmann::json& j, int d, const char* what);
/// Throws SchemaError on any key of the object j outside `allowed`.
void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                    const char* what);

/// Vector of d signed measures, one per coordinate of the drift.
class DriftMeasure {
 public:
  DriftMeasure() = default;
  DriftMeasure(int d, std::vector<SignedMeasure> components);

  static DriftMeasure zero(int d);
  static DriftMeasure constant(const Point& c);
  /// b(x) = -gamma * clamp(x, -clip, clip) componentwise.
  static DriftMeasure ornstein_uhlenbeck(int d, double gamma, double clip);
  /// b(x) = amplitude * direction * exp(-|x - center|^2 / (2 width^2)).
  static DriftMeasure gaussian_bump(double amplitude, double width, const Point& center,
                                    const Point& direction);

  int dimension() const { return dimension_; }
  const std::vector<SignedMeasure>& components() const { return components_; }
  const SignedMeasure& component(int i) const { return components_.at(i); }

  /// sum_i |mu_i|.
  SignedMeasure total_variation_sum() const;
  bool has_density() const;

  nlohmann::json to_json() const;
  static DriftMeasure from_json(const nlohmann::json& j);

 private:
  int dimension_ = 0;
  std::vector<SignedMeasure> components_;
};

/// The standard bump phi(x) = c_d exp(-1/(1-|x|^2)) on the unit ball, rescaled
/// to phi_n(x) = 2^{nd} phi(2^n x).
class Mollifier {
 public:
  Mollifier(int dimension, int level);

  int dimension() const { return dimension_; }
  int level() const { return level_; }
  double radius() const;
  double operator()(const Point& x) const;
  /// Integral of phi_n over the hyperplane slice at signed distance h along one axis.
  double marginal(double h) const;
  /// c_d such that the base bump has unit mass.
  static double normalization(int dimension);

 private:
  int dimension_;
  int level_;
  double scale_;
};

/// b^(n)(x) = (phi_n * mu_1(x), ..., phi_n * mu_d(x)).
Point mollified_drift(const DriftMeasure& mu, int level, const Point& x,
                      const IntegrationOptions& opt = {});

/// Pointwise-evaluable vector field used by the series and the simulator.
class DriftField {
 public:
  using Function = std::function<Point(const Point&)>;

  DriftField() = default;
  DriftField(int d, Function f, double sup_norm);

  static DriftField zero(int d);
  /// Densities evaluated directly when level is empty; mollified at level n otherwise.
  static DriftField from_measure(const DriftMeasure& mu, std::optional<int> level,
                                 const IntegrationOptions& opt = {});

  int dimension() const { return dimension_; }
  Point operator()(const Point& x) const { return f_(x); }
  /// Upper bound on sup_x |b(x)| (Euclidean); +inf when unknown.
  double sup_norm() const { return sup_norm_; }
  bool is_zero() const { return zero_; }

 private:
  int dimension_ = 0;
  Function f_;
  double sup_norm_ = 0.0;
  bool zero_ = false;
};

}  // namespace katolab
