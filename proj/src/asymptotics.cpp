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

#include "katolab/asymptotics.hpp"

#include "katolab/csv.hpp"
#include "katolab/kernels.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace katolab {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double eps_log(double eps, double p) { return p > 0.0 ? eps * std::log(p) : -kInf; }

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json tail_json(const TailEstimate& t) {
  return json{{"estimate", t.estimate.to_json()},
              {"count", t.exceedances},
              {"upper95", t.upper95},
              {"rare_event", t.rare_event},
              {"exact_zero", t.exact_zero},
              {"failed", t.failed}};
}

}  // namespace

void PiecewiseLinearPath::validate() const {
  if (knots.size() < 2) throw DomainError("PiecewiseLinearPath: needs at least two knots");
  if (values.size() != knots.size()) throw DomainError("PiecewiseLinearPath: knots and values differ in length");
  if (knots.front() != 0.0 || knots.back() != 1.0)
    throw DomainError("PiecewiseLinearPath: knots must run from 0 to 1");
  for (std::size_t i = 1; i < knots.size(); ++i)
    if (!(knots[i] > knots[i - 1])) throw DomainError("PiecewiseLinearPath: knots must increase strictly");
  const int d = dimension();
  check_dimension(d);
  for (const auto& v : values) {
    if (v.size() != d) throw DomainError("PiecewiseLinearPath: dimension mismatch");
    if (!v.allFinite()) throw DomainError("PiecewiseLinearPath: non-finite value");
  }
}

Point PiecewiseLinearPath::at(double t) const {
  if (t <= knots.front()) return values.front();
  if (t >= knots.back()) return values.back();
  const auto it = std::upper_bound(knots.begin(), knots.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - knots.begin()) - 1;
  const double w = (t - knots[i]) / (knots[i + 1] - knots[i]);
  return (1.0 - w) * values[i] + w * values[i + 1];
}

PiecewiseLinearPath PiecewiseLinearPath::constant(const Point& x) { return {{0.0, 1.0}, {x, x}}; }

PiecewiseLinearPath PiecewiseLinearPath::line(const Point& x, const Point& y) {
  return {{0.0, 1.0}, {x, y}};
}

json PiecewiseLinearPath::to_json() const {
  json v = json::array();
  for (const auto& p : values) v.push_back(point_json(p));
  return json{{"knots", knots}, {"values", v}};
}

PiecewiseLinearPath PiecewiseLinearPath::from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("path: expected an object");
  reject_unknown(j, {"knots", "values"}, "path");
  if (!j.contains("knots") || !j.contains("values")) throw SchemaError("path: needs knots and values");
  const json& v = j.at("values");
  if (!v.is_array() || v.empty() || !v[0].is_array()) throw SchemaError("path/values: expected arrays");
  PiecewiseLinearPath f;
  try {
    f.knots = j.at("knots").get<std::vector<double>>();
  } catch (const json::exception&) {
    throw SchemaError("path/knots: expected an array of numbers");
  }
  const int d = static_cast<int>(v[0].size());
  for (const auto& p : v) f.values.push_back(point_from_json(p, d, "path/values"));
  try {
    f.validate();
  } catch (const DomainError& e) {
    throw SchemaError(e.what());
  }
  return f;
}

double rate_function(const PiecewiseLinearPath& f) {
  f.validate();
  double sum = 0.0;
  for (std::size_t i = 1; i < f.knots.size(); ++i) {
    const double dt = f.knots[i] - f.knots[i - 1];
    if (dt < 1e-14) throw DomainError("rate_function: degenerate knot spacing");
    sum += (f.values[i] - f.values[i - 1]).squaredNorm() / (2.0 * dt);
  }
  return sum;
}

TubeInfimum tube_rate_infimum(const PiecewiseLinearPath& f, double rho, int knots, double tol,
                              int max_sweeps) {
  f.validate();
  if (!(rho > 0.0)) throw DomainError("tube_rate_infimum: rho must be positive");
  if (knots < 2) throw DomainError("tube_rate_infimum: needs at least two knots");
  const int n = knots - 1;
  std::vector<double> t(knots);
  std::vector<Point> center(knots), g(knots);
  for (int i = 0; i <= n; ++i) {
    t[i] = static_cast<double>(i) / n;
    center[i] = f.at(t[i]);
    g[i] = center[i];
  }
  auto project = [&](const Point& p, int i) -> Point {
    const Point off = p - center[i];
    const double r = off.norm();
    return r <= rho ? p : (center[i] + off * (rho / r)).eval();
  };
  const double h = 1.0 / n;
  TubeInfimum out;
  for (out.sweeps = 0; out.sweeps < max_sweeps;) {
    ++out.sweeps;
    double change = 0.0;
    for (int i = 1; i <= n; ++i) {
      // uniform spacing: the unconstrained minimizer is the neighbour average
      const Point target = i < n ? (0.5 * (g[i - 1] + g[i + 1])).eval() : g[n - 1];
      const Point next = project(target, i);
      change = std::max(change, (next - g[i]).lpNorm<Eigen::Infinity>());
      g[i] = next;
    }
    if (change < tol) {
      out.converged = true;
      break;
    }
  }
  out.minimizer.knots = t;
  out.minimizer.values = g;
  double sum = 0.0;
  for (int i = 1; i <= n; ++i) sum += (g[i] - g[i - 1]).squaredNorm() / (2.0 * h);
  out.value = sum;
  return out;
}

Extrapolation extrapolate_limit(const std::vector<double>& t, const std::vector<double>& values,
                                const std::vector<double>& errors) {
  Extrapolation out;
  if (t.size() != values.size() || t.size() != errors.size())
    throw DomainError("extrapolate_limit: length mismatch");
  if (t.size() < 3) return out;
  std::vector<std::size_t> idx(t.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return t[a] < t[b]; });
  Eigen::Matrix3d m;
  Eigen::Vector3d v, e;
  for (int r = 0; r < 3; ++r) {
    const double s = t[idx[r]];
    m.row(r) << 1.0, s * std::log(s), s;
    v(r) = values[idx[r]];
    e(r) = errors[idx[r]];
  }
  const Eigen::FullPivLU<Eigen::Matrix3d> lu(m);
  if (!lu.isInvertible()) return out;
  const Eigen::Matrix3d inv = lu.inverse();
  const Eigen::Vector3d c = inv * v;
  out.limit = c(0);
  out.slope_tlogt = c(1);
  out.slope_t = c(2);
  out.error = (inv.row(0).transpose().cwiseProduct(e)).norm();
  out.ok = std::isfinite(out.limit);
  return out;
}

void AsymptoticCurve::write_csv(std::ostream& out) const {
  CsvWriter csv(out, {"t", "tlogq", "err", "reference"});
  for (std::size_t i = 0; i < t_grid.size(); ++i)
    if (reliable[i]) csv.row(t_grid[i], values[i], errors[i], reference[i]);
}

json AsymptoticCurve::to_json() const {
  json pts = json::array();
  for (std::size_t i = 0; i < t_grid.size(); ++i)
    pts.push_back({{"t", t_grid[i]},
                   {"tlogq", number_or_null(values[i])},
                   {"err", number_or_null(errors[i])},
                   {"reference", reference[i]},
                   {"reliable", static_cast<bool>(reliable[i])},
                   {"note", notes[i]}});
  return json{{"points", pts},
              {"target", target},
              {"extrapolated_limit", limit.ok ? json(limit.limit) : json(nullptr)},
              {"limit_error", limit.ok ? json(limit.error) : json(nullptr)},
              {"excluded", std::count(reliable.begin(), reliable.end(), false)}};
}

AsymptoticCurve varadhan_curve(const Point& x, const Point& y, const std::vector<double>& t_grid,
                               const VaradhanConfig& cfg) {
  if (x.size() != y.size()) throw DomainError("varadhan_curve: dimension mismatch");
  if (t_grid.empty()) throw DomainError("varadhan_curve: empty t grid");
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    if (!(t_grid[i] > 0.0)) throw DomainError("varadhan_curve: times must be positive");
    if (i && !(t_grid[i] < t_grid[i - 1])) throw DomainError("varadhan_curve: t grid must decrease");
  }
  if (!(cfg.max_relative_error > 0.0)) throw DomainError("varadhan_curve: max_relative_error must be positive");
  const DriftMeasure& drift = cfg.mode == DensityMode::Parametrix ? cfg.series.drift : cfg.sde.drift;
  if (drift.dimension() != x.size()) throw DomainError("varadhan_curve: drift dimension mismatch");
  const bool drift_free = DriftField::from_measure(drift, cfg.mode == DensityMode::Parametrix
                                                               ? cfg.series.mollify_level
                                                               : cfg.sde.mollify_level)
                              .is_zero();
  AsymptoticCurve out;
  out.t_grid = t_grid;
  out.target = -0.5 * (x - y).squaredNorm();
  for (double t : t_grid) {
    const double ref = t * log_gaussian_p(t, x, y);
    out.reference.push_back(ref);
    if (drift_free) {
      out.values.push_back(ref);
      out.errors.push_back(0.0);
      out.reliable.push_back(true);
      out.notes.push_back("closed form");
      continue;
    }
    double q = 0.0, err = 0.0;
    bool flagged = false;
    std::string note;
    if (cfg.mode == DensityMode::Parametrix) {
      const HeatKernelEstimate e = heat_kernel(t, x, y, cfg.series, cfg.series_tol);
      q = e.value;
      // the certified bound is used when it is the sharper of the two
      const double tail = e.truncation_certified ? std::min(e.truncation_bound, e.empirical_tail)
                                                 : e.empirical_tail;
      err = e.quad_error + tail;
      if (e.budget_exhausted) note = "budget exhausted";
    } else {
      SdeConfig sde = cfg.sde;
      sde.horizon = t;
      const KdeEstimate k = kde_density(simulate_paths(sde, x, sde.steps_to(t)), t, y, cfg.bandwidth);
      q = k.estimate.mean;
      err = 3.0 * k.estimate.std_error + std::abs(k.at_half - k.estimate.mean);
      flagged = k.flagged;
      if (flagged) note = "few samples near y";
    }
    const bool ok = !flagged && q > 0.0 && std::isfinite(q) && err / q < cfg.max_relative_error;
    if (!ok && note.empty()) note = q > 0.0 ? "relative error too large" : "nonpositive density";
    out.values.push_back(q > 0.0 ? t * std::log(q) : -kInf);
    out.errors.push_back(q > 0.0 ? t * err / q : kInf);
    out.reliable.push_back(ok);
    out.notes.push_back(note);
  }
  std::vector<double> ts, vs, es;
  for (std::size_t i = 0; i < t_grid.size(); ++i)
    if (out.reliable[i]) {
      ts.push_back(t_grid[i]);
      vs.push_back(out.values[i]);
      es.push_back(out.errors[i]);
    }
  out.limit = extrapolate_limit(ts, vs, es);
  return out;
}

void TubeTable::write_csv(std::ostream& out) const {
  CsvWriter csv(out, {"epsilon", "estimate", "lo", "hi", "reference"});
  for (const auto& r : rows) csv.row(r.epsilon, r.eps_log, r.eps_log_lo, r.eps_log_hi, reference);
}

json TubeTable::to_json() const {
  json rs = json::array();
  for (const auto& r : rows)
    rs.push_back({{"epsilon", r.epsilon},
                  {"probability", tail_json(r.hits)},
                  {"eps_log", number_or_null(r.eps_log)},
                  {"eps_log_lo", number_or_null(r.eps_log_lo)},
                  {"eps_log_hi", number_or_null(r.eps_log_hi)},
                  {"below_resolution", r.below_resolution}});
  return json{{"rows", rs},
              {"rho", rho},
              {"reference", reference},
              {"tube_sweeps", tube.sweeps},
              {"tube_converged", tube.converged}};
}

TubeTable ldp_tube_experiment(const Point& x, const PiecewiseLinearPath& f, double rho,
                              const std::vector<double>& eps_grid, const SdeConfig& cfg,
                              int tube_knots) {
  f.validate();
  if (!(rho > 0.0)) throw DomainError("ldp_tube_experiment: rho must be positive");
  if (f.dimension() != x.size()) throw DomainError("ldp_tube_experiment: dimension mismatch");
  if ((f.values.front() - x).norm() >= rho)
    throw DomainError("ldp_tube_experiment: f(0) must lie within rho of x");
  for (std::size_t i = 0; i < eps_grid.size(); ++i) {
    if (!(eps_grid[i] > 0.0)) throw DomainError("ldp_tube_experiment: eps must be positive");
    if (i && !(eps_grid[i] < eps_grid[i - 1])) throw DomainError("ldp_tube_experiment: eps grid must decrease");
  }
  TubeTable out;
  out.rho = rho;
  out.tube = tube_rate_infimum(f, rho, tube_knots);
  out.reference = -out.tube.value;
  const double rho2 = rho * rho;
  for (double eps : eps_grid) {
    TubeRow row;
    row.epsilon = eps;
    row.hits = stays_inside(cfg, x, eps, [&](double s, const Point& xs) {
      return (xs - f.at(s / eps)).squaredNorm() < rho2;
    });
    const std::size_t n = row.hits.estimate.n_samples;
    const std::size_t k = row.hits.exceedances;
    row.eps_log = eps_log(eps, row.hits.estimate.mean);
    row.eps_log_lo = eps_log(eps, binomial_lower95(k, n));
    row.eps_log_hi = eps_log(eps, row.hits.upper95);
    row.below_resolution = k == 0;
    out.rows.push_back(row);
  }
  return out;
}

void EquivalenceTable::write_csv(std::ostream& out) const {
  CsvWriter csv(out, {"epsilon", "estimate", "lo", "hi", "reference"});
  for (const auto& r : rows)
    csv.row(r.epsilon, r.eps_log, r.eps_log_lo, r.eps_log_upper, eps_log(r.epsilon, std::min(1.0, r.bound)));
}

json EquivalenceTable::to_json() const {
  json rs = json::array();
  for (const auto& r : rows)
    rs.push_back({{"epsilon", r.epsilon},
                  {"tail", tail_json(r.tail)},
                  {"eps_log", number_or_null(r.eps_log)},
                  {"eps_log_lo", number_or_null(r.eps_log_lo)},
                  {"eps_log_upper", number_or_null(r.eps_log_upper)},
                  {"n_kato", r.n_kato},
                  {"bound", r.bound},
                  {"bound_holds", r.bound_holds}});
  return json{{"rows", rs}, {"delta", delta}, {"decreasing", decreasing}};
}

EquivalenceTable exp_equivalence_diag(const Point& x, double delta,
                                      const std::vector<double>& eps_grid, const SdeConfig& cfg,
                                      const EnvelopeConstants& env, const KatoOptions& kato) {
  if (eps_grid.empty()) throw DomainError("exp_equivalence_diag: empty eps grid");
  for (std::size_t i = 0; i < eps_grid.size(); ++i)
    if (i && !(eps_grid[i] < eps_grid[i - 1])) throw DomainError("exp_equivalence_diag: eps grid must decrease");
  EquivalenceTable out;
  out.delta = delta;
  const SignedMeasure tv = cfg.drift.total_variation_sum();
  const bool drift_free = DriftField::from_measure(cfg.drift, cfg.mollify_level).is_zero();
  for (double eps : eps_grid) {
    EquivalenceRow row;
    row.epsilon = eps;
    row.tail = sup_A_tail(cfg, x, delta, eps);
    const std::size_t n = row.tail.estimate.n_samples;
    row.eps_log = row.tail.exact_zero ? -kInf : eps_log(eps, row.tail.estimate.mean);
    row.eps_log_lo = row.tail.exact_zero ? -kInf : eps_log(eps, binomial_lower95(row.tail.exceedances, n));
    row.eps_log_upper = row.tail.exact_zero ? -kInf : eps_log(eps, row.tail.upper95);
    row.n_kato = drift_free ? 0.0 : kato_norm_N(tv, eps, env.c6, kato).value;
    const double scale = 8.0 * eps * env.c4 * env.c4 * std::exp(2.0 * env.c5) * row.n_kato * row.n_kato;
    row.bound = scale == 0.0 ? 0.0 : 2.0 * std::exp(-delta * delta / scale);
    row.bound_holds = row.tail.estimate.mean <= row.bound + 3.0 * row.tail.estimate.std_error;
    out.rows.push_back(row);
  }
  out.decreasing = true;
  for (std::size_t i = 1; i < out.rows.size(); ++i) {
    const double a = out.rows[i - 1].eps_log_upper, b = out.rows[i].eps_log_upper;
    // two exact-zero rows are tied at -inf
    out.decreasing = out.decreasing && b < a;
  }
  return out;
}

}  // namespace katolab
