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

// Parametrix series q = sum_k I_k for the generator (1/2)Laplacian + b.grad,
//   I_0 = p,  I_{k+1}(t,x,y) = int_0^t int I_k(t-s,x,z) b(z).grad_z p(s,z,y) dz ds.
//
// Each I_k is evaluated as one k-fold time-ordered integral against the
// Brownian bridge from x to y:
//   I_k = p(t,x,y) int_{0<s_1<...<s_k<t} E[prod_j b(Z_j).(Z_{j+1}-Z_j)/(s_{j+1}-s_j)] ds
// with Z_j the bridge at s_j and Z_{k+1} = y, s_{k+1} = t.

#include "katolab/kato_norms.hpp"
#include "katolab/measures.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace katolab {

struct QuadratureSpec {
  enum class Mode { Deterministic, ImportanceSampled };
  Mode mode = Mode::Deterministic;
  /// Deterministic mode: (time nodes, space nodes per axis) for k = 1, 2, ...;
  /// orders beyond the list are derived from `budget`.
  std::vector<std::pair<int, int>> schedule;
  /// Deterministic mode: integrand evaluations allowed per term.
  double budget = 3e7;
  /// Importance-sampled mode: samples per term, split over independent batches.
  std::size_t samples = 200000;
  int batches = 16;
  std::uint64_t seed = 1;
};

enum class TmaxPolicy {
  Refuse,  ///< t beyond T_delta throws RefusalError
  Flag     ///< compute anyway; truncation is controlled empirically and flagged
};

struct SeriesConfig {
  DriftMeasure drift;
  /// Mollification level; empty evaluates density components directly.
  std::optional<int> mollify_level;
  double delta = 0.3;
  int max_terms = 8;
  QuadratureSpec quad;
  TmaxPolicy t_max_policy = TmaxPolicy::Refuse;
  /// Contraction constant; empty uses calibrate_c_delta on the reference suite.
  std::optional<double> c_delta;
  /// Kato exponent of the contraction; empty uses (1 - delta/2)/4.
  std::optional<double> alpha;
  KatoOptions kato;
  IntegrationOptions integration;

  void validate() const;
  double kato_alpha() const;
};

struct TermEstimate {
  double value = 0.0;
  double error = 0.0;  ///< |fine - coarse| or standard error
  std::size_t evaluations = 0;
  bool converged = true;
  bool budget_exhausted = false;  ///< the smallest rule exceeds the evaluation budget
};

struct HeatKernelEstimate {
  double value = 0.0;
  std::vector<double> terms;  ///< I_0, I_1, ...
  std::vector<double> term_errors;
  double truncation_bound = 0.0;
  double quad_error = 0.0;
  bool converged = false;
  /// truncation_bound comes from the contraction (rho < 1); otherwise it is
  /// the empirical tail |I_K| + |I_{K-1}|.
  bool truncation_certified = false;
  /// |I_K| + |I_{K-1}|, whether or not the truncation is certified.
  double empirical_tail = 0.0;
  bool negative = false;
  bool budget_exhausted = false;
  double rho = 0.0;  ///< C_delta N_t^alpha(|b|)
  int terms_used() const { return static_cast<int>(terms.size()); }
};

/// Term I_k at (t, x, y) for the pointwise drift b.
TermEstimate series_term(int k, double t, const Point& x, const Point& y, const DriftField& b,
                         const QuadratureSpec& quad);

/// Term I_k with the configuration's drift and T_delta policy.
TermEstimate series_term(int k, double t, const Point& x, const Point& y,
                         const SeriesConfig& cfg);

/// Sums terms until truncation + quadrature error < tol * |value| or max_terms.
HeatKernelEstimate heat_kernel(double t, const Point& x, const Point& y, const SeriesConfig& cfg,
                               double tol);

/// For measure drifts: raises the mollification level from cfg.mollify_level
/// until consecutive values differ by less than tol/2 (relative).
struct MollifiedHeatKernel {
  HeatKernelEstimate estimate;
  int level = 0;
  double level_change = 0.0;
  bool level_converged = false;
};
MollifiedHeatKernel heat_kernel_mollified(double t, const Point& x, const Point& y,
                                          SeriesConfig cfg, double tol, int max_level = 8);

/// (rho^{k+1}/(1-rho)) t^{-d/2} exp(-(1-delta)|x-y|^2/2t) with rho = c_delta n_kato.
double truncation_bound(int k, double t, const Point& x, const Point& y, double delta,
                        double c_delta, double n_kato);

struct LemmaRatio {
  double value = 0.0;  ///< sup over the grid of J / (N_t^alpha(b) G_{a1}(t,x,y))
  Point argmax_x;
  Point argmax_y;
  double n_kato = 0.0;
  int skipped = 0;  ///< pairs with G_{a1}(t,x,y) below the double range
};

/// Ratio of int_0^t int G_{a1}(t-s,x,z) b(z) G_{a2}(s,z,y) s^{-1/2} dz ds to
/// N_t^alpha(b) G_{a1}(t,x,y), maximized over (x, y) pairs.
LemmaRatio convolution_lemma_ratio(double a1, double a2, const SignedMeasure& b, double t,
                                   const std::vector<std::pair<Point, Point>>& grid,
                                   std::optional<double> alpha = std::nullopt,
                                   const KatoOptions& kato = {});

/// Pairs around the measure's effective box at the scale sqrt(t).
std::vector<std::pair<Point, Point>> default_lemma_grid(const SignedMeasure& b, double t);

/// Drifts used to calibrate C_delta when none is supplied.
std::vector<SignedMeasure> reference_suite(int d);

struct Calibration {
  double c0 = 0.0;       ///< max lemma ratio over the suite
  double c_delta = 0.0;  ///< (2 pi)^{-d/2} m_{delta/2} c0
  double alpha = 0.0;
  bool empirical = true;
};

Calibration calibrate_c_delta(int d, double delta, const std::vector<SignedMeasure>& suite,
                              const std::vector<double>& times = {0.1, 0.05, 0.025},
                              std::optional<double> alpha = std::nullopt);

/// rho(t) = C_delta N_t^alpha(sum_i |mu_i|).
double contraction_factor(const SignedMeasure& tv, double t, double c_delta, double alpha,
                          const KatoOptions& kato = {});

/// Largest t <= t_hi with contraction factor <= 1/2 (bisection); 0 if none.
double t_max(const SignedMeasure& tv, double c_delta, double alpha, double t_hi = 4.0,
             const KatoOptions& kato = {});

struct UpperBoundReport {
  double q = 0.0;
  double error = 0.0;
  double bound = 0.0;  ///< 2 t^{-d/2} exp(-(1-delta)|x-y|^2/2t)
  bool pass = false;
  bool certified = false;
};

UpperBoundReport upper_bound_certificate(double t, const Point& x, const Point& y,
                                         const SeriesConfig& cfg, double tol = 1e-3);

/// Lambda-norm kernel mode backed by the series (Custom mode).
TransitionKernel make_parametrix_kernel(SeriesConfig cfg, double tol);

struct SweepRow {
  double t;
  Point x;
  Point y;
  HeatKernelEstimate estimate;
};

/// CSV columns (t, x, y, value, trunc_bound, quad_err, terms_used, converged).
void write_heat_kernel_csv(std::ostream& out, const std::vector<SweepRow>& rows);

std::string point_to_string(const Point& p);

}  // namespace katolab
