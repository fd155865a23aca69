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

#include "katolab/parametrix.hpp"

#include "katolab/csv.hpp"
#include "katolab/kernels.hpp"
#include "katolab/parallel.hpp"
#include "katolab/quadrature.hpp"
#include "katolab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <ostream>
#include <sstream>
#include <tuple>

namespace katolab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Nodes of one nesting level: Gauss-Legendre on the stick-breaking fraction u
// and tensor Gauss-Hermite for the standardized bridge increment.
struct LevelRule {
  std::vector<double> u;
  std::vector<double> wu;
  std::vector<Point> xi;
  std::vector<double> wxi;
};

LevelRule level_rule(int d, int time_nodes, int space_nodes) {
  LevelRule r;
  const QuadRule gl = gauss_legendre(time_nodes, 0.0, 1.0);
  r.u = gl.nodes;
  r.wu = gl.weights;
  std::vector<QuadRule> axes(d, gauss_hermite(space_nodes));
  TensorRule(std::move(axes)).for_each([&](const Point& p, double w) {
    r.xi.push_back(p);
    r.wxi.push_back(w);
  });
  return r;
}

std::pair<int, int> node_schedule(const QuadratureSpec& q, int k, int d) {
  if (k - 1 < static_cast<int>(q.schedule.size())) return q.schedule[k - 1];
  const double per_level = std::pow(q.budget, 1.0 / k);
  int ns = static_cast<int>(std::floor(std::pow(per_level / 1.5, 1.0 / (d + 1))));
  // ceil((k+1)/2) Hermite nodes integrate the degree-k polynomial of a constant
  // drift exactly; prefer that over time nodes when the budget allows
  const int exact_ns = (k + 2) / 2;
  ns = std::max(ns, std::min(exact_ns, static_cast<int>(std::floor(std::pow(per_level / 2.0, 1.0 / d)))));
  ns = std::clamp(ns, 2, 24);
  const int nt = std::clamp(static_cast<int>(std::floor(per_level / std::pow(ns, d))), 2, 48);
  return {nt, ns};
}

// Depth-first evaluation of the bridge expectation times the time Jacobian.
class NestedSum {
 public:
  NestedSum(int k, double t, const Point& y, const DriftField& b, const LevelRule& rule)
      : k_(k), t_(t), y_(y), b_(b), rule_(rule) {}

  // Contribution of the level-1 node (iu, ix) from x at time 0.
  double level_one(const Point& x, std::size_t iu, std::size_t ix, std::size_t& evals) const {
    return node(1, 0.0, x, Point(), iu, ix, evals);
  }

  double level(int j, double s_prev, const Point& z_prev, const Point& b_prev,
               std::size_t& evals) const {
    double sum = 0.0;
    for (std::size_t iu = 0; iu < rule_.u.size(); ++iu)
      for (std::size_t ix = 0; ix < rule_.xi.size(); ++ix)
        sum += node(j, s_prev, z_prev, b_prev, iu, ix, evals);
    return sum;
  }

 private:
  double node(int j, double s_prev, const Point& z_prev, const Point& b_prev, std::size_t iu,
              std::size_t ix, std::size_t& evals) const {
    const double remaining = t_ - s_prev;
    const double s = s_prev + remaining * rule_.u[iu];
    const double tau = s - s_prev;
    const double w = remaining * rule_.wu[iu] * rule_.wxi[ix];
    const double var = tau * (t_ - s) / remaining;
    const Point z = (z_prev + (tau / remaining) * (y_ - z_prev) + std::sqrt(var) * rule_.xi[ix]).eval();
    ++evals;
    const Point bz = b_(z);
    double factor = w;
    if (j > 1) factor *= b_prev.dot(z - z_prev) / tau;
    if (j == k_) return factor * bz.dot(y_ - z) / (t_ - s);
    return factor * level(j + 1, s, z, bz, evals);
  }

  int k_;
  double t_;
  const Point& y_;
  const DriftField& b_;
  const LevelRule& rule_;
};

double deterministic_sum(int k, double t, const Point& x, const Point& y, const DriftField& b,
                         int time_nodes, int space_nodes, std::size_t& evals) {
  const LevelRule rule = level_rule(x.size(), time_nodes, space_nodes);
  const NestedSum nested(k, t, y, b, rule);
  const std::size_t n = rule.u.size() * rule.xi.size();
  std::vector<double> parts(n, 0.0);
  std::vector<std::size_t> counts(n, 0);
  parallel_for(n, [&](std::size_t i) {
    parts[i] = nested.level_one(x, i / rule.xi.size(), i % rule.xi.size(), counts[i]);
  });
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += parts[i];
    evals += counts[i];
  }
  return sum;
}

TermEstimate deterministic_term(int k, double t, const Point& x, const Point& y,
                                const DriftField& b, const QuadratureSpec& quad) {
  const auto [nt, ns] = node_schedule(quad, k, static_cast<int>(x.size()));
  TermEstimate out;
  const double cost = std::pow(nt * std::pow(ns, x.size()), k);
  if (quad.schedule.size() < static_cast<std::size_t>(k) && cost > 2.0 * quad.budget) {
    out.error = kInf;
    out.converged = false;
    out.budget_exhausted = true;
    return out;
  }
  const double p = gaussian_p(t, x, y);
  const double fine = deterministic_sum(k, t, x, y, b, nt, ns, out.evaluations);
  const int coarse_nt = std::max(1, nt - 1);
  const int coarse_ns = ns > 2 ? ns - 1 : ns;
  const double coarse = deterministic_sum(k, t, x, y, b, coarse_nt, coarse_ns, out.evaluations);
  out.value = p * fine;
  out.error = p * std::abs(fine - coarse);
  return out;
}

// Gaps (s_1, s_2 - s_1, ..., t - s_k) ~ t Dirichlet(1, 1/2, ..., 1/2) absorb the
// (s_{j+1} - s_j)^{-1/2} singularities; the bridge is sampled exactly.
TermEstimate sampled_term(int k, double t, const Point& x, const Point& y, const DriftField& b,
                          const QuadratureSpec& quad) {
  if (quad.samples == 0 || quad.batches < 1)
    throw DomainError("series_term: sample counts must be positive");
  const int d = static_cast<int>(x.size());
  const double log_volume =
      0.5 * k * std::log(t * std::numbers::pi) - std::lgamma(1.0 + 0.5 * k);
  const double volume = std::exp(log_volume);
  const std::size_t batches = static_cast<std::size_t>(quad.batches);
  std::vector<double> sums(batches, 0.0), sums2(batches, 0.0);
  std::vector<std::size_t> counts(batches, 0);
  parallel_for(batches, [&](std::size_t bi) {
    Rng rng = make_stream(mix64(quad.seed) ^ mix64(static_cast<std::uint64_t>(k)), bi);
    NormalSampler normal;
    const std::size_t n = quad.samples / batches + (bi < quad.samples % batches ? 1 : 0);
    std::vector<double> gaps(k + 1), s(k + 2);
    std::vector<Point> z(k + 2);
    for (std::size_t i = 0; i < n; ++i) {
      double total = 0.0;
      gaps[0] = -std::log(1.0 - NormalSampler::uniform(rng));
      total += gaps[0];
      for (int j = 1; j <= k; ++j) {
        const double g = normal(rng);
        gaps[j] = 0.5 * g * g;
        total += gaps[j];
      }
      s[0] = 0.0;
      for (int j = 0; j <= k; ++j) gaps[j] *= t / total;
      for (int j = 1; j <= k + 1; ++j) s[j] = s[j - 1] + gaps[j - 1];
      s[k + 1] = t;
      z[0] = x;
      z[k + 1] = y;
      for (int j = 1; j <= k; ++j) {
        const double remaining = t - s[j - 1];
        const double tau = s[j] - s[j - 1];
        const double sd = std::sqrt(std::max(0.0, tau * (t - s[j]) / remaining));
        Point noise(d);
        for (int c = 0; c < d; ++c) noise(c) = normal(rng);
        z[j] = (z[j - 1] + (tau / remaining) * (y - z[j - 1]) + sd * noise).eval();
      }
      double f = volume;
      for (int j = 1; j <= k; ++j) {
        const double gap = s[j + 1] - s[j];
        f *= b(z[j]).dot(z[j + 1] - z[j]) / std::sqrt(gap);
      }
      if (!std::isfinite(f)) continue;
      sums[bi] += f;
      sums2[bi] += f * f;
      ++counts[bi];
    }
  });
  double s1 = 0.0, s2 = 0.0;
  std::size_t n = 0;
  for (std::size_t bi = 0; bi < batches; ++bi) {
    s1 += sums[bi];
    s2 += sums2[bi];
    n += counts[bi];
  }
  TermEstimate out;
  out.evaluations = n * static_cast<std::size_t>(k);
  if (n < 2) {
    out.converged = false;
    out.error = kInf;
    return out;
  }
  const double mean = s1 / n;
  const double var = std::max(0.0, (s2 - n * mean * mean) / (n - 1));
  const double p = gaussian_p(t, x, y);
  out.value = p * mean;
  out.error = p * std::sqrt(var / n);
  out.converged = n == quad.samples;
  return out;
}

DriftField make_field(const SeriesConfig& cfg) {
  return DriftField::from_measure(cfg.drift, cfg.mollify_level, cfg.integration);
}

bool drift_is_zero(const DriftMeasure& mu) {
  for (const auto& c : mu.components())
    if (!(c.kind() == SignedMeasure::Kind::Density && c.to_json().value("profile", "") == "zero"))
      return false;
  return true;
}

bool fully_described(const nlohmann::json& j) {
  if (j.is_null()) return false;
  if (j.is_object() || j.is_array())
    for (const auto& v : j)
      if (!fully_described(v)) return false;
  return true;
}

// N_t^alpha(|b|) is needed once per (t, drift); sweeps over (x, y) reuse it.
double cached_kato_N(const SignedMeasure& tv, double t, double alpha, const KatoOptions& kato) {
  const nlohmann::json desc = tv.to_json();
  if (!kato.grid.empty() || !fully_described(desc)) return kato_norm_N(tv, t, alpha, kato).value;
  using Key = std::tuple<std::string, double, double, int, double>;
  static std::map<Key, double> cache;
  static std::mutex mu;
  const Key key{desc.dump(), t, alpha, kato.grid_per_dim, kato.rel_tol};
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  const double v = kato_norm_N(tv, t, alpha, kato).value;
  std::lock_guard<std::mutex> lock(mu);
  cache.emplace(key, v);
  return v;
}

const Calibration& cached_calibration(int d, double delta, double alpha) {
  static std::map<std::tuple<int, double, double>, Calibration> cache;
  static std::mutex mu;
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find({d, delta, alpha});
    if (it != cache.end()) return it->second;
  }
  Calibration c = calibrate_c_delta(d, delta, reference_suite(d), {0.1, 0.05, 0.025}, alpha);
  std::lock_guard<std::mutex> lock(mu);
  return cache.emplace(std::make_tuple(d, delta, alpha), c).first->second;
}

double c_delta_of(const SeriesConfig& cfg) {
  if (cfg.c_delta) return *cfg.c_delta;
  return cached_calibration(cfg.drift.dimension(), cfg.delta, cfg.kato_alpha()).c_delta;
}

double log_envelope(double t, const Point& x, const Point& y, double delta) {
  const double d = static_cast<double>(x.size());
  return -0.5 * d * std::log(t) - (1.0 - delta) * (x - y).squaredNorm() / (2.0 * t);
}

}  // namespace

void SeriesConfig::validate() const {
  if (drift.dimension() < 1) throw DomainError("SeriesConfig: drift not set");
  if (!(delta > 0.0 && delta < 1.0)) throw DomainError("SeriesConfig: delta must lie in (0, 1)");
  if (max_terms < 1) throw DomainError("SeriesConfig: max_terms must be at least 1");
  if (quad.mode == QuadratureSpec::Mode::ImportanceSampled &&
      (quad.samples == 0 || quad.batches < 1))
    throw DomainError("SeriesConfig: sample counts must be positive");
  if (mollify_level && *mollify_level < 0)
    throw DomainError("SeriesConfig: mollification level must be nonnegative");
  if (alpha && !(*alpha > 0.0)) throw DomainError("SeriesConfig: alpha must be positive");
}

double SeriesConfig::kato_alpha() const { return alpha.value_or((1.0 - 0.5 * delta) / 4.0); }

TermEstimate series_term(int k, double t, const Point& x, const Point& y, const DriftField& b,
                         const QuadratureSpec& quad) {
  if (k < 0) throw DomainError("series_term: k must be nonnegative");
  if (!(t > 0.0)) throw DomainError("series_term: t must be positive");
  if (x.size() != y.size() || x.size() != b.dimension())
    throw DomainError("series_term: dimension mismatch");
  TermEstimate out;
  if (k == 0) {
    out.value = gaussian_p(t, x, y);
    return out;
  }
  if (b.is_zero()) return out;
  if (quad.mode == QuadratureSpec::Mode::Deterministic)
    return deterministic_term(k, t, x, y, b, quad);
  return sampled_term(k, t, x, y, b, quad);
}

TermEstimate series_term(int k, double t, const Point& x, const Point& y,
                         const SeriesConfig& cfg) {
  cfg.validate();
  if (k > 0 && cfg.t_max_policy == TmaxPolicy::Refuse && !drift_is_zero(cfg.drift)) {
    const double rho = contraction_factor(cfg.drift.total_variation_sum(), t, c_delta_of(cfg),
                                          cfg.kato_alpha(), cfg.kato);
    if (rho > 0.5) {
      std::ostringstream msg;
      msg << "series_term: t = " << t << " exceeds T_delta (C_delta N = " << rho << ")";
      throw RefusalError(msg.str(), rho);
    }
  }
  return series_term(k, t, x, y, make_field(cfg), cfg.quad);
}

double truncation_bound(int k, double t, const Point& x, const Point& y, double delta,
                        double c_delta, double n_kato) {
  if (!(t > 0.0)) throw DomainError("truncation_bound: t must be positive");
  const double rho = c_delta * n_kato;
  if (rho == 0.0) return 0.0;
  if (!(rho < 1.0)) throw RefusalError("truncation_bound: contraction factor is not below 1", rho);
  return std::exp((k + 1) * std::log(rho) - std::log1p(-rho) + log_envelope(t, x, y, delta));
}

HeatKernelEstimate heat_kernel(double t, const Point& x, const Point& y, const SeriesConfig& cfg,
                               double tol) {
  cfg.validate();
  if (!(tol > 0.0)) throw DomainError("heat_kernel: tol must be positive");
  if (!(t > 0.0)) throw DomainError("heat_kernel: t must be positive");
  HeatKernelEstimate est;
  const double p = gaussian_p(t, x, y);
  est.terms.push_back(p);
  est.term_errors.push_back(0.0);
  est.value = p;
  if (drift_is_zero(cfg.drift)) {
    est.converged = true;
    est.truncation_certified = true;
    return est;
  }
  const double c_delta = c_delta_of(cfg);
  const double alpha = cfg.kato_alpha();
  const double n_kato = cached_kato_N(cfg.drift.total_variation_sum(), t, alpha, cfg.kato);
  est.rho = c_delta * n_kato;
  if (cfg.t_max_policy == TmaxPolicy::Refuse && !(est.rho <= 0.5)) {
    std::ostringstream msg;
    msg << "heat_kernel: t = " << t << " exceeds T_delta (C_delta N = " << est.rho << ")";
    throw RefusalError(msg.str(), est.rho);
  }
  est.truncation_certified = est.rho < 1.0;
  const DriftField b = make_field(cfg);
  est.empirical_tail = kInf;
  bool all_converged = true;
  for (int k = 1; k <= cfg.max_terms; ++k) {
    const TermEstimate term = series_term(k, t, x, y, b, cfg.quad);
    if (term.budget_exhausted) {
      est.budget_exhausted = true;
      break;
    }
    est.terms.push_back(term.value);
    est.term_errors.push_back(term.error);
    est.value += term.value;
    est.quad_error += term.error;
    all_converged = all_converged && term.converged;
    est.empirical_tail = k >= 2 ? std::abs(term.value) + std::abs(est.terms[k - 1]) : kInf;
    if (est.truncation_certified) {
      est.truncation_bound = truncation_bound(k, t, x, y, cfg.delta, c_delta, n_kato);
    } else {
      est.truncation_bound = est.empirical_tail;
    }
    if (est.truncation_bound + est.quad_error < tol * std::abs(est.value)) {
      est.converged = all_converged;
      break;
    }
  }
  est.negative = est.value < 0.0;
  return est;
}

MollifiedHeatKernel heat_kernel_mollified(double t, const Point& x, const Point& y,
                                          SeriesConfig cfg, double tol, int max_level) {
  MollifiedHeatKernel out;
  int n = cfg.mollify_level.value_or(0);
  cfg.mollify_level = n;
  HeatKernelEstimate prev = heat_kernel(t, x, y, cfg, tol);
  while (n < max_level) {
    cfg.mollify_level = n + 1;
    HeatKernelEstimate next = heat_kernel(t, x, y, cfg, tol);
    out.level_change = std::abs(next.value - prev.value);
    prev = std::move(next);
    ++n;
    if (out.level_change < 0.5 * tol * std::abs(prev.value)) {
      out.level_converged = true;
      break;
    }
  }
  out.estimate = std::move(prev);
  out.level = n;
  return out;
}

std::vector<std::pair<Point, Point>> default_lemma_grid(const SignedMeasure& b, double t) {
  const int d = b.dimension();
  const Box eff = b.effective_box();
  const Point c = eff.bounded() ? (0.5 * (eff.lo + eff.hi)).eval() : Point::Zero(d);
  const double h = std::sqrt(t);
  std::vector<Point> pts;
  for (int i = -2; i <= 2; ++i) pts.push_back((c + i * h * Point::Unit(d, 0)).eval());
  if (d >= 2)
    for (int i = 1; i <= 2; ++i) pts.push_back((c + i * h * Point::Unit(d, 1)).eval());
  std::vector<std::pair<Point, Point>> grid;
  for (const auto& x : pts)
    for (const auto& y : pts) grid.emplace_back(x, y);
  return grid;
}

LemmaRatio convolution_lemma_ratio(double a1, double a2, const SignedMeasure& b, double t,
                                   const std::vector<std::pair<Point, Point>>& grid,
                                   std::optional<double> alpha, const KatoOptions& kato) {
  if (!(a1 > 0.0 && a1 < a2)) throw DomainError("convolution_lemma_ratio: need 0 < a1 < a2");
  if (!(t > 0.0)) throw DomainError("convolution_lemma_ratio: t must be positive");
  if (!b.is_nonnegative()) throw DomainError("convolution_lemma_ratio: b must be nonnegative");
  const int d = b.dimension();
  LemmaRatio out;
  out.argmax_x = out.argmax_y = Point::Zero(d);
  const double a = alpha.value_or(a2 / 4.0);
  out.n_kato = kato_norm_N(b, t, a, kato).value;
  if (out.n_kato == 0.0) return out;
  // time nodes: s = u^2 on [0, t/2], plain on [t/2, t]
  const QuadRule lower = composite_legendre(0.0, std::sqrt(0.5 * t), 3, 12);
  const QuadRule upper = composite_legendre(0.5 * t, t, 3, 12);
  auto spatial = [&](double s, const Point& x, const Point& y) {
    const double tau1 = (t - s) / a1, tau2 = s / a2;
    const double v = tau1 * tau2 / (tau1 + tau2);
    const Point m = ((tau2 * x + tau1 * y) / (tau1 + tau2)).eval();
    const double log_pre = -0.5 * d * (std::log(t - s) + std::log(s)) -
                           (x - y).squaredNorm() / (2.0 * (tau1 + tau2));
    return std::exp(log_pre) * b.gaussian_integral(m, 0.5 / v);
  };
  std::vector<double> ratio(grid.size(), -1.0);
  parallel_for(grid.size(), [&](std::size_t i) {
    const auto& [x, y] = grid[i];
    const double log_g = log_g_kernel(a1, t, x, y);
    if (log_g < -700.0) return;
    double j = 0.0;
    for (std::size_t q = 0; q < lower.size(); ++q) {
      const double u = lower.nodes[q];
      // s^{-1/2} ds = 2 du
      j += lower.weights[q] * 2.0 * spatial(u * u, x, y);
    }
    for (std::size_t q = 0; q < upper.size(); ++q) {
      const double s = upper.nodes[q];
      j += upper.weights[q] * spatial(s, x, y) / std::sqrt(s);
    }
    ratio[i] = j / (out.n_kato * std::exp(log_g));
  });
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (ratio[i] < 0.0) {
      ++out.skipped;
      continue;
    }
    if (ratio[i] > out.value) {
      out.value = ratio[i];
      out.argmax_x = grid[i].first;
      out.argmax_y = grid[i].second;
    }
  }
  return out;
}

std::vector<SignedMeasure> reference_suite(int d) {
  const Point c = Point::Zero(d);
  return {SignedMeasure::gaussian_bump(1.0, 0.5, c), SignedMeasure::gaussian_bump(1.0, 0.25, c),
          SignedMeasure::constant(d, 1.0)};
}

Calibration calibrate_c_delta(int d, double delta, const std::vector<SignedMeasure>& suite,
                              const std::vector<double>& times, std::optional<double> alpha) {
  if (!(delta > 0.0 && delta < 1.0)) throw DomainError("calibrate_c_delta: delta in (0, 1)");
  Calibration cal;
  const double a1 = 1.0 - delta, a2 = 1.0 - 0.5 * delta;
  cal.alpha = alpha.value_or(a2 / 4.0);
  // suite members are centered and radially symmetric, so a coarse sup grid
  // containing the center suffices
  KatoOptions kato;
  kato.grid_per_dim = 3;
  for (const auto& b : suite) {
    if (b.dimension() != d) throw DomainError("calibrate_c_delta: suite dimension mismatch");
    for (double t : times) {
      const LemmaRatio r = convolution_lemma_ratio(a1, a2, b.abs(), t, default_lemma_grid(b, t),
                                                   cal.alpha, kato);
      cal.c0 = std::max(cal.c0, r.value);
    }
  }
  // |grad p| <= (2 pi)^{-d/2} m_{delta/2} s^{-1/2} G_{1-delta/2}
  cal.c_delta = std::pow(2.0 * std::numbers::pi, -0.5 * d) * m_delta_unchecked(0.5 * delta) * cal.c0;
  return cal;
}

double contraction_factor(const SignedMeasure& tv, double t, double c_delta, double alpha,
                          const KatoOptions& kato) {
  return c_delta * cached_kato_N(tv, t, alpha, kato);
}

double t_max(const SignedMeasure& tv, double c_delta, double alpha, double t_hi,
             const KatoOptions& kato) {
  if (contraction_factor(tv, t_hi, c_delta, alpha, kato) <= 0.5) return t_hi;
  double lo = 0.0, hi = t_hi;
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (contraction_factor(tv, mid, c_delta, alpha, kato) <= 0.5) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

UpperBoundReport upper_bound_certificate(double t, const Point& x, const Point& y,
                                         const SeriesConfig& cfg, double tol) {
  const HeatKernelEstimate est = heat_kernel(t, x, y, cfg, tol);
  UpperBoundReport r;
  r.q = est.value;
  r.error = est.truncation_bound + est.quad_error;
  r.bound = 2.0 * std::exp(log_envelope(t, x, y, cfg.delta));
  r.pass = r.q - r.error <= r.bound;
  r.certified = est.truncation_certified;
  return r;
}

TransitionKernel make_parametrix_kernel(SeriesConfig cfg, double tol) {
  return TransitionKernel::from_function([cfg = std::move(cfg), tol](double s, const Point& x,
                                                                     const Point& y) {
    return heat_kernel(s, x, y, cfg, tol).value;
  });
}

std::string point_to_string(const Point& p) {
  std::string out = "[";
  for (int i = 0; i < p.size(); ++i) {
    if (i) out += ',';
    out += csv_number(p(i));
  }
  return out + "]";
}

void write_heat_kernel_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  CsvWriter csv(out, {"t", "x", "y", "value", "trunc_bound", "quad_err", "terms_used",
                      "converged"});
  for (const auto& r : rows)
    csv.row(r.t, point_to_string(r.x), point_to_string(r.y), r.estimate.value,
            r.estimate.truncation_bound, r.estimate.quad_error, r.estimate.terms_used(),
            r.estimate.converged);
}

}  // namespace katolab
