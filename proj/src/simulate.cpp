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

#include "katolab/simulate.hpp"

#include "katolab/csv.hpp"
#include "katolab/kernels.hpp"
#include "katolab/parallel.hpp"
#include "katolab/parametrix.hpp"
#include "katolab/quadrature.hpp"
#include "katolab/rng.hpp"

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/non_central_chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

namespace katolab {

using nlohmann::json;

namespace {

constexpr std::size_t kBlock = 256;

// One Euler path. visit(k, X_k, W_k, A_k) runs at every grid time k = 0..steps;
// returns false when the drift is not finite at a visited state.
template <typename Visit>
bool run_path(const DriftField& b, const Point& x, double h, int steps, Rng& rng, Visit&& visit) {
  const int d = static_cast<int>(x.size());
  NormalSampler normal;
  Point w = Point::Zero(d), a = Point::Zero(d), xi(d);
  const double sqrt_h = std::sqrt(h);
  for (int k = 0;; ++k) {
    const Point state = (x + w + a).eval();
    visit(k, state, w, a);
    if (k == steps) return true;
    const Point bx = b(state);
    if (!bx.allFinite()) return false;
    for (int c = 0; c < d; ++c) xi(c) = normal(rng);
    w += sqrt_h * xi;
    a += h * bx;
  }
}

// Runs per-path work f(path, rng) -> optional value over independent blocks
// and returns values in path order.
template <typename F>
std::vector<std::optional<double>> per_path(std::size_t paths, std::uint64_t seed, F&& f) {
  std::vector<std::optional<double>> out(paths);
  const std::size_t blocks = (paths + kBlock - 1) / kBlock;
  parallel_for(blocks, [&](std::size_t bi) {
    const std::size_t end = std::min(paths, (bi + 1) * kBlock);
    for (std::size_t i = bi * kBlock; i < end; ++i) {
      Rng rng = make_stream(seed, i);
      out[i] = f(i, rng);
    }
  });
  return out;
}

struct Collected {
  EstimatorResult result;
  std::size_t failed = 0;
};

Collected collect(const std::vector<std::optional<double>>& values) {
  Collected c;
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : values) {
    if (!v) {
      ++c.failed;
      continue;
    }
    sum += *v;
    ++n;
  }
  double ss = 0.0;
  const double mean = n ? sum / n : 0.0;
  for (const auto& v : values)
    if (v) ss += (*v - mean) * (*v - mean);
  c.result.mean = mean;
  c.result.n_samples = n;
  c.result.std_error = n > 1 ? std::sqrt(ss / (n - 1) / n) : 0.0;
  c.result.ci95 = {mean - 1.96 * c.result.std_error, mean + 1.96 * c.result.std_error};
  return c;
}

DriftField dynamics_field(const SdeConfig& cfg) {
  return DriftField::from_measure(cfg.drift, cfg.mollify_level, cfg.integration);
}

void require_functional(const SignedMeasure& b) {
  if (!b.has_density()) throw DomainError("functional: needs a pointwise density");
  if (!b.is_nonnegative()) throw DomainError("functional: must be nonnegative");
}

TailEstimate tail_from(const std::vector<std::optional<double>>& hits) {
  TailEstimate out;
  const Collected c = collect(hits);
  out.estimate = c.result;
  out.failed = c.failed;
  out.exceedances = static_cast<std::size_t>(std::llround(c.result.mean * c.result.n_samples));
  out.upper95 = binomial_upper95(out.exceedances, c.result.n_samples);
  out.rare_event = out.exceedances < 10;
  return out;
}

TailEstimate exact_zero_tail(std::size_t paths) {
  TailEstimate out;
  out.exact_zero = true;
  out.estimate.n_samples = paths;
  return out;
}

}  // namespace

void SdeConfig::validate() const {
  if (drift.dimension() < 1) throw DomainError("SdeConfig: drift not set");
  if (!(step > 0.0)) throw DomainError("SdeConfig: step must be positive");
  if (!(horizon > 0.0)) throw DomainError("SdeConfig: horizon must be positive");
  if (paths < 1) throw DomainError("SdeConfig: paths must be at least 1");
  if (mollify_level) {
    if (*mollify_level < 0) throw DomainError("SdeConfig: mollification level must be nonnegative");
    if (step_guard && step > std::ldexp(1.0, -2 * *mollify_level) * (1.0 + 1e-12))
      throw DomainError("SdeConfig: step exceeds 2^{-2n} at mollification level " +
                        std::to_string(*mollify_level));
  } else if (!drift.has_density()) {
    throw DomainError("SdeConfig: singular drift components need a mollification level");
  }
}

int SdeConfig::steps_to(double t) const {
  if (!(t > 0.0)) throw DomainError("SdeConfig: time must be positive");
  return std::max(1, static_cast<int>(std::ceil(t / step - 1e-9)));
}

json SdeConfig::to_json() const {
  return json{{"drift", drift.to_json()},
              {"mollify_level", mollify_level ? json(*mollify_level) : json(nullptr)},
              {"step", step},
              {"horizon", horizon},
              {"paths", paths},
              {"seed", seed},
              {"step_guard", step_guard}};
}

std::size_t PathEnsemble::time_index(double t) const {
  std::size_t best = 0;
  for (std::size_t k = 1; k < times.size(); ++k)
    if (std::abs(times[k] - t) < std::abs(times[best] - t)) best = k;
  if (times.empty() || std::abs(times[best] - t) > 1e-9 * std::max(1.0, std::abs(t)))
    throw DomainError("PathEnsemble: time not on the recorded grid");
  return best;
}

void PathEnsemble::write_csv(std::ostream& out) const {
  std::vector<std::string> header = {"path_id", "t"};
  for (const char* name : {"X", "W", "A"})
    for (int c = 1; c <= dimension; ++c) header.push_back(name + std::to_string(c));
  CsvWriter csv(out, header);
  std::vector<std::string> fields;
  for (std::size_t i = 0; i < paths(); ++i) {
    for (std::size_t k = 0; k < times.size(); ++k) {
      fields.clear();
      fields.push_back(std::to_string(path_ids[i]));
      fields.push_back(csv_number(times[k]));
      for (const Point* p : {&state(i, k), &w(i, k), &a(i, k)})
        for (int c = 0; c < dimension; ++c) fields.push_back(csv_number((*p)(c)));
      csv.row_fields(fields);
    }
  }
}

PathEnsemble simulate_paths(const SdeConfig& cfg, const Point& x, int record_every) {
  cfg.validate();
  if (x.size() != cfg.dimension()) throw DomainError("simulate_paths: dimension mismatch");
  if (record_every < 1) throw DomainError("simulate_paths: record_every must be positive");
  const int steps = cfg.steps_to(cfg.horizon);
  const double h = cfg.horizon / steps;
  std::vector<int> recorded;
  for (int k = 0; k <= steps; k += record_every) recorded.push_back(k);
  if (recorded.back() != steps) recorded.push_back(steps);
  const std::size_t nt = recorded.size();
  const DriftField b = dynamics_field(cfg);

  struct Slot {
    bool ok = false;
    std::vector<Point> x, w, a;
  };
  std::vector<Slot> slots(cfg.paths);
  const std::size_t blocks = (cfg.paths + kBlock - 1) / kBlock;
  parallel_for(blocks, [&](std::size_t bi) {
    const std::size_t end = std::min(cfg.paths, (bi + 1) * kBlock);
    for (std::size_t i = bi * kBlock; i < end; ++i) {
      Rng rng = make_stream(cfg.seed, i);
      Slot& s = slots[i];
      s.x.reserve(nt);
      s.w.reserve(nt);
      s.a.reserve(nt);
      std::size_t next = 0;
      s.ok = run_path(b, x, h, steps, rng, [&](int k, const Point& xs, const Point& ws, const Point& as) {
        if (next < nt && recorded[next] == k) {
          s.x.push_back(xs);
          s.w.push_back(ws);
          s.a.push_back(as);
          ++next;
        }
      });
    }
  });

  PathEnsemble ens;
  ens.dimension = cfg.dimension();
  for (int k : recorded) ens.times.push_back(k * h);
  for (std::size_t i = 0; i < cfg.paths; ++i) {
    if (!slots[i].ok) {
      ++ens.failed;
      continue;
    }
    ens.path_ids.push_back(i);
    ens.states.insert(ens.states.end(), slots[i].x.begin(), slots[i].x.end());
    ens.brownian.insert(ens.brownian.end(), slots[i].w.begin(), slots[i].w.end());
    ens.drift_part.insert(ens.drift_part.end(), slots[i].a.begin(), slots[i].a.end());
  }
  return ens;
}

EstimatorResult EstimatorResult::from_sums(double sum, double sum_sq, std::size_t n) {
  EstimatorResult r;
  r.n_samples = n;
  if (n == 0) return r;
  r.mean = sum / n;
  const double var = n > 1 ? std::max(0.0, (sum_sq - n * r.mean * r.mean) / (n - 1)) : 0.0;
  r.std_error = std::sqrt(var / n);
  r.ci95 = {r.mean - 1.96 * r.std_error, r.mean + 1.96 * r.std_error};
  return r;
}

json EstimatorResult::to_json() const {
  return json{{"mean", mean},
              {"stderr", std_error},
              {"ci95", json::array({ci95.first, ci95.second})},
              {"n_samples", n_samples}};
}

json estimator_record(const std::string& name, const EstimatorResult& r, const SdeConfig& cfg,
                      const json& extra) {
  json j{{"estimator", name}, {"result", r.to_json()}, {"config", cfg.to_json()},
         {"seed", cfg.seed}};
  if (extra.is_object())
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  return j;
}

std::vector<MomentEstimate> estimate_moments(const SdeConfig& cfg, const Point& x,
                                             const std::vector<int>& powers, double t,
                                             const SignedMeasure& functional,
                                             const TransitionKernel& kernel,
                                             const KatoOptions& kato) {
  cfg.validate();
  for (int n : powers) {
    if (n < 0) throw DomainError("estimate_moment: power must be nonnegative");
    if (n > 6) throw DomainError("estimate_moment: power above 6 is rejected");
  }
  require_functional(functional);
  const double lambda_t = lambda_norm(functional, t, kernel, kato).value;
  const DriftField b = dynamics_field(cfg);
  const int steps = cfg.steps_to(t);
  const double h = t / steps;
  const auto integrals = per_path(cfg.paths, cfg.seed, [&](std::size_t, Rng& rng) -> std::optional<double> {
    double f = 0.0;
    const bool ok = run_path(b, x, h, steps, rng, [&](int k, const Point& xs, const Point&, const Point&) {
      if (k < steps) f += h * functional.density_at(xs);
    });
    if (!ok) return std::nullopt;
    return f;
  });
  std::vector<MomentEstimate> out;
  for (int n : powers) {
    MomentEstimate m;
    m.lambda_t = lambda_t;
    m.bound = moment_bound(n, t, lambda_t);
    if (n == 0) {
      m.estimate.mean = 1.0;
      m.estimate.ci95 = {1.0, 1.0};
      m.estimate.n_samples = cfg.paths;
    } else {
      std::vector<std::optional<double>> values(integrals.size());
      for (std::size_t i = 0; i < integrals.size(); ++i)
        if (integrals[i]) values[i] = std::pow(*integrals[i], n);
      const Collected c = collect(values);
      m.estimate = c.result;
      m.failed = c.failed;
    }
    out.push_back(m);
  }
  return out;
}

MomentEstimate estimate_moment(const SdeConfig& cfg, const Point& x, int n_power, double t,
                               const SignedMeasure& functional, const TransitionKernel& kernel,
                               const KatoOptions& kato) {
  return estimate_moments(cfg, x, {n_power}, t, functional, kernel, kato).front();
}

double brownian_moment_quadrature(const SignedMeasure& functional, const Point& x, double t,
                                  int n_power, int time_nodes, int space_nodes) {
  require_functional(functional);
  if (n_power == 0) return 1.0;
  if (n_power > 2) throw DomainError("brownian_moment_quadrature: power must be at most 2");
  const int d = static_cast<int>(x.size());
  const QuadRule time = gauss_legendre(time_nodes, 0.0, 1.0);
  std::vector<Point> xi;
  std::vector<double> wxi;
  TensorRule(std::vector<QuadRule>(d, gauss_hermite(space_nodes))).for_each([&](const Point& p, double w) {
    xi.push_back(p);
    wxi.push_back(w);
  });
  // E[b(z + sqrt(r) xi)]
  auto smoothed = [&](const Point& z, double r) {
    double sum = 0.0;
    const double sr = std::sqrt(r);
    for (std::size_t j = 0; j < xi.size(); ++j) sum += wxi[j] * functional.density_at(z + sr * xi[j]);
    return sum;
  };
  double total = 0.0;
  for (std::size_t i = 0; i < time.size(); ++i) {
    const double s1 = t * time.nodes[i];
    if (n_power == 1) {
      total += t * time.weights[i] * smoothed(x, s1);
      continue;
    }
    // s2 = s1 + (t - s1) v
    for (std::size_t j = 0; j < xi.size(); ++j) {
      const Point y1 = x + std::sqrt(s1) * xi[j];
      const double b1 = functional.density_at(y1);
      if (b1 == 0.0) continue;
      double inner = 0.0;
      for (std::size_t l = 0; l < time.size(); ++l)
        inner += (t - s1) * time.weights[l] * smoothed(y1, (t - s1) * time.nodes[l]);
      total += 2.0 * t * time.weights[i] * wxi[j] * b1 * inner;
    }
  }
  return total;
}

LaplaceEstimate estimate_laplace(const SdeConfig& cfg, const Point& x, double lambda, double t,
                                 const SignedMeasure& functional, const TransitionKernel& kernel,
                                 const KatoOptions& kato) {
  cfg.validate();
  if (!(lambda >= 0.0)) throw DomainError("estimate_laplace: lambda must be nonnegative");
  require_functional(functional);
  constexpr double kExponentCap = 600.0;
  const auto sup = functional.sup_abs_density();
  if (sup && lambda * t * *sup > kExponentCap) {
    std::ostringstream msg;
    msg << "estimate_laplace: lambda t sup b = " << lambda * t * *sup << " overflows";
    throw RefusalError(msg.str(), lambda * t * *sup);
  }
  LaplaceEstimate out;
  out.lambda_t = lambda_norm(functional, t, kernel, kato).value;
  const double z = lambda * std::sqrt(t) * out.lambda_t;
  out.bound_sharp = (1.0 + z) * std::exp(z * z);
  out.bound_simple = 2.0 * std::exp(2.0 * z * z);
  if (lambda == 0.0) {
    out.estimate.mean = 1.0;
    out.estimate.ci95 = {1.0, 1.0};
    out.estimate.n_samples = cfg.paths;
    return out;
  }
  const DriftField b = dynamics_field(cfg);
  const int steps = cfg.steps_to(t);
  const double h = t / steps;
  const auto values = per_path(cfg.paths, cfg.seed, [&](std::size_t, Rng& rng) -> std::optional<double> {
    double f = 0.0;
    const bool ok = run_path(b, x, h, steps, rng, [&](int k, const Point& xs, const Point&, const Point&) {
      if (k < steps) f += h * functional.density_at(xs);
    });
    if (!ok) return std::nullopt;
    if (lambda * f > kExponentCap) return std::numeric_limits<double>::infinity();
    return std::exp(lambda * f);
  });
  for (const auto& v : values)
    if (v && std::isinf(*v))
      throw RefusalError("estimate_laplace: lambda int b(X_s) ds overflows on some path", kExponentCap);
  const Collected c = collect(values);
  out.estimate = c.result;
  out.failed = c.failed;
  return out;
}

double binomial_upper95(std::size_t k, std::size_t n) {
  if (n == 0) return 1.0;
  if (k == 0) return std::min(1.0, 3.0 / static_cast<double>(n));
  if (k >= n) return 1.0;
  return boost::math::ibeta_inv(static_cast<double>(k + 1), static_cast<double>(n - k), 0.95);
}

double binomial_lower95(std::size_t k, std::size_t n) {
  if (n == 0 || k == 0) return 0.0;
  return boost::math::ibeta_inv(static_cast<double>(k), static_cast<double>(n - k + 1), 0.05);
}

TailEstimate stays_inside(const SdeConfig& cfg, const Point& x, double horizon,
                          const std::function<bool(double, const Point&)>& inside) {
  cfg.validate();
  if (x.size() != cfg.dimension()) throw DomainError("stays_inside: dimension mismatch");
  const DriftField b = dynamics_field(cfg);
  const int steps = cfg.steps_to(horizon);
  const double h = horizon / steps;
  return tail_from(per_path(cfg.paths, cfg.seed, [&](std::size_t, Rng& rng) -> std::optional<double> {
    bool in = true;
    const bool ok = run_path(b, x, h, steps, rng, [&](int k, const Point& xs, const Point&, const Point&) {
      in = in && inside(k * h, xs);
    });
    if (!ok) return std::nullopt;
    return in ? 1.0 : 0.0;
  }));
}

TailEstimate sup_A_tail(const SdeConfig& cfg, const Point& x, double delta, double eps) {
  cfg.validate();
  if (!(delta > 0.0)) throw DomainError("sup_A_tail: delta must be positive");
  if (!(eps > 0.0)) throw DomainError("sup_A_tail: eps must be positive");
  const DriftField b = dynamics_field(cfg);
  // |A_s| <= s sup|b| on every path
  if (b.is_zero() || delta >= eps * b.sup_norm()) return exact_zero_tail(cfg.paths);
  const int steps = cfg.steps_to(eps);
  const double h = eps / steps;
  const double delta2 = delta * delta;
  return tail_from(per_path(cfg.paths, cfg.seed, [&](std::size_t, Rng& rng) -> std::optional<double> {
    bool hit = false;
    const bool ok = run_path(b, x, h, steps, rng, [&](int, const Point&, const Point&, const Point& a) {
      hit = hit || a.squaredNorm() > delta2;
    });
    if (!ok) return std::nullopt;
    return hit ? 1.0 : 0.0;
  }));
}

double gaussian_ball_probability(const Point& x, const Point& y, double eps, double r) {
  if (!(eps > 0.0 && r > 0.0)) throw DomainError("gaussian_ball_probability: eps and r must be positive");
  const double d = static_cast<double>(x.size());
  const double nc = (x - y).squaredNorm() / r;
  const double q = eps * eps / r;
  if (nc == 0.0) return boost::math::cdf(boost::math::chi_squared(d), q);
  return boost::math::cdf(boost::math::non_central_chi_squared(d, nc), q);
}

BallEstimate ball_probability(const SdeConfig& cfg, const Point& x, const Point& y, double eps,
                              double r, const EnvelopeConstants& env, const KatoOptions& kato) {
  cfg.validate();
  if (!(eps > 0.0)) throw DomainError("ball_probability: eps must be positive");
  if (!(r > 0.0)) throw DomainError("ball_probability: r must be positive");
  const int d = cfg.dimension();
  const DriftField b = dynamics_field(cfg);
  const int steps = cfg.steps_to(r);
  const double h = r / steps;
  const double eps2 = eps * eps;
  BallEstimate out;
  out.probability = tail_from(per_path(cfg.paths, cfg.seed, [&](std::size_t, Rng& rng) -> std::optional<double> {
    double inside = 0.0;
    const bool ok = run_path(b, x, h, steps, rng, [&](int k, const Point& xs, const Point&, const Point&) {
      if (k == steps) inside = (xs - y).squaredNorm() < eps2 ? 1.0 : 0.0;
    });
    if (!ok) return std::nullopt;
    return inside;
  }));
  out.gaussian_probability = gaussian_ball_probability(x, y, eps, r);
  out.n_kato = b.is_zero() ? 0.0 : kato_norm_N(cfg.drift.total_variation_sum(), r, env.c6, kato).value;
  const double dist = (x - y).norm();
  const double scale = 8.0 * r * env.c4 * env.c4 * std::exp(2.0 * env.c5) * out.n_kato * out.n_kato;
  out.lower_bound = -std::numeric_limits<double>::infinity();
  constexpr int kGrid = 400;
  for (int j = 0; j < kGrid; ++j) {
    const double delta = eps * j / kGrid;
    const double gauss = std::pow(2.0 * std::numbers::pi * r, -0.5 * d) * unit_ball_volume(d) *
                         std::pow(eps - delta, d) *
                         std::exp(-(dist + eps - delta) * (dist + eps - delta) / (2.0 * r));
    const double tail = scale == 0.0 ? 0.0 : 2.0 * std::exp(-delta * delta / scale);
    if (gauss - tail > out.lower_bound) {
      out.lower_bound = gauss - tail;
      out.best_delta = delta;
    }
  }
  return out;
}

KdeEstimate kde_density(const PathEnsemble& ens, double t, const Point& y, double bandwidth) {
  const std::size_t k = ens.time_index(t);
  const std::size_t n = ens.paths();
  if (n < 2) throw DomainError("kde_density: need at least two paths");
  if (y.size() != ens.dimension) throw DomainError("kde_density: dimension mismatch");
  const int d = ens.dimension;
  KdeEstimate out;
  if (bandwidth <= 0.0) {
    Point mean = Point::Zero(d), m2 = Point::Zero(d);
    for (std::size_t i = 0; i < n; ++i) {
      mean += ens.state(i, k);
      m2 += ens.state(i, k).cwiseAbs2();
    }
    mean /= static_cast<double>(n);
    const Point var = (m2 / static_cast<double>(n) - mean.cwiseAbs2()) * (n / (n - 1.0));
    const double sigma = var.cwiseMax(0.0).cwiseSqrt().mean();
    bandwidth = sigma * std::pow(4.0 / ((d + 2.0) * n), 1.0 / (d + 4.0));
    if (!(bandwidth > 0.0)) throw DomainError("kde_density: degenerate sample spread");
  }
  out.bandwidth = bandwidth;
  auto estimate = [&](double hb, std::vector<double>* values) {
    const double norm = std::pow(2.0 * std::numbers::pi * hb * hb, -0.5 * d);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = norm * std::exp(-(ens.state(i, k) - y).squaredNorm() / (2.0 * hb * hb));
      sum += v;
      if (values) values->push_back(v);
    }
    return sum / n;
  };
  std::vector<double> values;
  values.reserve(n);
  estimate(bandwidth, &values);
  std::vector<std::optional<double>> opt(values.begin(), values.end());
  out.estimate = collect(opt).result;
  out.at_half = estimate(0.5 * bandwidth, nullptr);
  out.at_double = estimate(2.0 * bandwidth, nullptr);
  const double r2 = 4.0 * bandwidth * bandwidth;
  for (std::size_t i = 0; i < n; ++i)
    if ((ens.state(i, k) - y).squaredNorm() <= r2) ++out.near_samples;
  out.flagged = out.near_samples < 20;
  return out;
}

ChapmanReport chapman_lower_bound(double t, double eta, double eps, const Point& x,
                                  const Point& y, const SdeConfig& cfg,
                                  const SeriesConfig& series, double tol) {
  if (!(eta > 0.0 && eta < 1.0)) throw DomainError("chapman_lower_bound: eta must lie in (0, 1)");
  if (!(t > 0.0)) throw DomainError("chapman_lower_bound: t must be positive");
  const int d = cfg.dimension();
  SeriesConfig sc = series;
  sc.drift = cfg.drift;
  sc.mollify_level = cfg.mollify_level;
  const bool drift_free = dynamics_field(cfg).is_zero();
  auto q_at = [&](double s, const Point& from, const Point& to) -> std::pair<double, double> {
    if (drift_free) return {gaussian_p(s, from, to), 0.0};
    const HeatKernelEstimate e = heat_kernel(s, from, to, sc, tol);
    return {e.value, e.truncation_bound + e.quad_error};
  };
  // boundary points of B(y, eps) along the axes and the diagonals
  std::vector<Point> grid;
  for (int c = 0; c < d; ++c)
    for (double sgn : {-1.0, 1.0}) {
      Point z = y;
      z(c) += sgn * eps;
      grid.push_back(z);
    }
  for (int mask = 0; mask < (1 << d); ++mask) {
    Point dir(d);
    for (int c = 0; c < d; ++c) dir(c) = (mask >> c & 1) ? 1.0 : -1.0;
    grid.push_back((y + eps * dir / std::sqrt(static_cast<double>(d))).eval());
  }
  ChapmanReport out;
  out.inf_q = std::numeric_limits<double>::infinity();
  for (const auto& z : grid) out.inf_q = std::min(out.inf_q, q_at(eta * t, z, y).first);
  out.ball = ball_probability(cfg, x, y, eps, (1.0 - eta) * t);
  out.product = out.inf_q * out.ball.probability.estimate.mean;
  out.product_stderr = out.inf_q * out.ball.probability.estimate.std_error;
  const auto [q, err] = q_at(t, x, y);
  out.q = q;
  out.q_error = err;
  out.pass = out.product - 3.0 * out.product_stderr <= out.q + out.q_error;
  return out;
}

std::vector<CouplingLevel> mollification_coupling(const SdeConfig& cfg, const Point& x,
                                                  const std::vector<int>& levels) {
  if (x.size() != cfg.dimension()) throw DomainError("mollification_coupling: dimension mismatch");
  std::vector<CouplingLevel> out;
  for (int n : levels) {
    if (n < 0) throw DomainError("mollification_coupling: levels must be nonnegative");
    SdeConfig fine = cfg;
    fine.mollify_level = n + 1;
    fine.validate();
    const DriftField lo = DriftField::from_measure(cfg.drift, n, cfg.integration);
    const DriftField hi = DriftField::from_measure(cfg.drift, n + 1, cfg.integration);
    const int steps = cfg.steps_to(cfg.horizon);
    const double h = cfg.horizon / steps;
    const int d = cfg.dimension();
    std::vector<double> diff(cfg.paths, 0.0), integral(cfg.paths, 0.0);
    const std::size_t blocks = (cfg.paths + kBlock - 1) / kBlock;
    parallel_for(blocks, [&](std::size_t bi) {
      const std::size_t end = std::min(cfg.paths, (bi + 1) * kBlock);
      for (std::size_t i = bi * kBlock; i < end; ++i) {
        Rng rng = make_stream(cfg.seed, i);
        NormalSampler normal;
        Point w = Point::Zero(d), a0 = Point::Zero(d), a1 = Point::Zero(d), xi(d);
        double worst = 0.0, abs_int = 0.0;
        for (int k = 0; k < steps; ++k) {
          const Point b0 = lo((x + w + a0).eval());
          const Point b1 = hi((x + w + a1).eval());
          abs_int += h * b0.norm();
          for (int c = 0; c < d; ++c) xi(c) = normal(rng);
          w += std::sqrt(h) * xi;
          a0 += h * b0;
          a1 += h * b1;
          worst = std::max(worst, (a1 - a0).norm());
        }
        diff[i] = worst;
        integral[i] = abs_int;
      }
    });
    auto quantile = [](std::vector<double> v, double q) {
      const std::size_t idx = static_cast<std::size_t>(q * (v.size() - 1));
      std::nth_element(v.begin(), v.begin() + idx, v.end());
      return v[idx];
    };
    CouplingLevel lvl;
    lvl.level = n;
    lvl.median = quantile(diff, 0.5);
    lvl.q90 = quantile(diff, 0.9);
    lvl.abs_integral_median = quantile(integral, 0.5);
    lvl.abs_integral_q90 = quantile(integral, 0.9);
    out.push_back(lvl);
  }
  return out;
}

}  // namespace katolab
