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

#include "katolab/experiments.hpp"

#include "katolab/asymptotics.hpp"
#include "katolab/csv.hpp"
#include "katolab/kato_norms.hpp"
#include "katolab/kernels.hpp"
#include "katolab/parallel.hpp"
#include "katolab/parametrix.hpp"
#include "katolab/simulate.hpp"

#include <Eigen/Core>
#include <boost/version.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>

namespace katolab {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Typed access to one JSON object; finish() rejects every key never read.
class Params {
 public:
  Params(json j, std::string where) : j_(std::move(j)), where_(std::move(where)) {
    if (!j_.is_object()) throw SchemaError(where_ + ": expected an object");
  }

  const std::string& where() const { return where_; }
  bool has(const char* key) const { return j_.contains(key); }

  const json& raw(const char* key) {
    used_.insert(key);
    if (!j_.contains(key)) fail(key, "is required");
    return j_.at(key);
  }

  double number(const char* key) {
    const json& v = raw(key);
    if (!v.is_number()) fail(key, "must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(key, "must be finite");
    return x;
  }
  double number(const char* key, double fallback) {
    used_.insert(key);
    return has(key) ? number(key) : fallback;
  }

  long long integer(const char* key) {
    const json& v = raw(key);
    if (!v.is_number_integer()) fail(key, "must be an integer");
    return v.get<long long>();
  }
  long long integer(const char* key, long long fallback) {
    used_.insert(key);
    return has(key) ? integer(key) : fallback;
  }

  std::size_t count(const char* key, std::size_t fallback) {
    const long long v = integer(key, static_cast<long long>(fallback));
    if (v < 1) fail(key, "must be at least 1");
    return static_cast<std::size_t>(v);
  }

  bool boolean(const char* key, bool fallback) {
    used_.insert(key);
    if (!has(key)) return fallback;
    if (!j_.at(key).is_boolean()) fail(key, "must be a boolean");
    return j_.at(key).get<bool>();
  }

  std::string string(const char* key) {
    const json& v = raw(key);
    if (!v.is_string()) fail(key, "must be a string");
    return v.get<std::string>();
  }
  std::string string(const char* key, const std::string& fallback) {
    used_.insert(key);
    return has(key) ? string(key) : fallback;
  }
  std::string choice(const char* key, const std::string& fallback, std::initializer_list<const char*> allowed) {
    const std::string v = string(key, fallback);
    for (const char* a : allowed)
      if (v == a) return v;
    fail(key, "has unsupported value '" + v + "'");
  }

  std::vector<double> numbers(const char* key) {
    const json& v = raw(key);
    if (!v.is_array() || v.empty()) fail(key, "must be a nonempty array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) fail(key, "must contain only numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }
  std::vector<double> numbers(const char* key, std::vector<double> fallback) {
    used_.insert(key);
    return has(key) ? numbers(key) : fallback;
  }
  std::vector<int> integers(const char* key) {
    const json& v = raw(key);
    if (!v.is_array() || v.empty()) fail(key, "must be a nonempty array of integers");
    std::vector<int> out;
    for (const auto& x : v) {
      if (!x.is_number_integer()) fail(key, "must contain only integers");
      out.push_back(x.get<int>());
    }
    return out;
  }

  Point point(const char* key, int d) { return point_from_json(raw(key), d, (where_ + "/" + key).c_str()); }
  Point point(const char* key, int d, const Point& fallback) {
    used_.insert(key);
    return has(key) ? point(key, d) : fallback;
  }
  std::vector<Point> points(const char* key, int d) {
    const json& v = raw(key);
    if (!v.is_array() || v.empty()) fail(key, "must be a nonempty array of points");
    std::vector<Point> out;
    for (const auto& p : v) out.push_back(point_from_json(p, d, (where_ + "/" + key).c_str()));
    return out;
  }

  Params object(const char* key) { return Params(raw(key), where_ + "/" + key); }
  std::optional<Params> optional_object(const char* key) {
    used_.insert(key);
    if (!has(key)) return std::nullopt;
    return object(key);
  }
  std::vector<Params> objects(const char* key) {
    const json& v = raw(key);
    if (!v.is_array() || v.empty()) fail(key, "must be a nonempty array of objects");
    std::vector<Params> out;
    for (std::size_t i = 0; i < v.size(); ++i)
      out.emplace_back(v[i], where_ + "/" + key + "/" + std::to_string(i));
    return out;
  }

  DriftMeasure drift(const char* key) {
    const DriftMeasure mu = DriftMeasure::from_json(raw(key));
    return mu;
  }
  SignedMeasure measure(const char* key, int d) { return SignedMeasure::from_json(raw(key), d); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw SchemaError(where_ + ": unknown key '" + it.key() + "'");
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw SchemaError(where_ + "/" + key + " " + what);
  }

 private:
  json j_;
  std::string where_;
  std::set<std::string> used_;
};

// Collects artifacts under one prefix.
class Writer {
 public:
  explicit Writer(fs::path prefix) : prefix_(std::move(prefix)) {}

  void csv(const std::string& table, const std::function<void(std::ostream&)>& body) {
    std::ostringstream out;
    body(out);
    write(prefix_.string() + "_" + table + ".csv", out.str());
  }
  void write(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << content;
    artifacts.push_back(path);
  }

  json summary = json::object();
  std::vector<fs::path> artifacts;

 private:
  fs::path prefix_;
};

struct Plan {
  std::function<void(Writer&)> run;
};

std::string pstr(const Point& p) { return point_to_string(p); }

double rel_error(double value, double reference) {
  return std::abs(value - reference) / std::abs(reference);
}

KatoOptions parse_kato(std::optional<Params> p, int d) {
  KatoOptions k;
  if (!p) return k;
  if (p->has("grid")) k.grid = p->points("grid", d);
  k.grid_per_dim = static_cast<int>(p->count("grid_per_dim", k.grid_per_dim));
  k.rel_tol = p->number("rel_tol", k.rel_tol);
  if (!(k.rel_tol > 0.0)) p->fail("rel_tol", "must be positive");
  p->finish();
  return k;
}

SeriesConfig parse_series(std::optional<Params> p, const DriftMeasure& drift, std::uint64_t seed) {
  SeriesConfig s;
  s.drift = drift;
  s.quad.seed = seed;
  if (p) {
    s.delta = p->number("delta", s.delta);
    s.max_terms = static_cast<int>(p->integer("max_terms", s.max_terms));
    if (p->has("mollify_level")) s.mollify_level = static_cast<int>(p->integer("mollify_level"));
    s.t_max_policy = p->choice("policy", "refuse", {"refuse", "flag"}) == "flag" ? TmaxPolicy::Flag
                                                                               : TmaxPolicy::Refuse;
    if (p->has("c_delta")) s.c_delta = p->number("c_delta");
    if (p->has("alpha")) s.alpha = p->number("alpha");
    s.kato = parse_kato(p->optional_object("kato"), drift.dimension());
    if (auto q = p->optional_object("quadrature")) {
      const std::string mode = q->choice("mode", "deterministic", {"deterministic", "sampled"});
      s.quad.mode = mode == "sampled" ? QuadratureSpec::Mode::ImportanceSampled
                                      : QuadratureSpec::Mode::Deterministic;
      s.quad.budget = q->number("budget", s.quad.budget);
      s.quad.samples = q->count("samples", s.quad.samples);
      s.quad.batches = static_cast<int>(q->count("batches", s.quad.batches));
      if (q->has("schedule")) {
        const json& sch = q->raw("schedule");
        if (!sch.is_array()) q->fail("schedule", "must be an array of [time nodes, space nodes]");
        for (const auto& e : sch) {
          if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer())
            q->fail("schedule", "entries must be [time nodes, space nodes]");
          s.quad.schedule.emplace_back(e[0].get<int>(), e[1].get<int>());
        }
      }
      q->finish();
    }
    p->finish();
  }
  try {
    s.validate();
  } catch (const DomainError& e) {
    throw SchemaError(std::string("series: ") + e.what());
  }
  return s;
}

SdeConfig parse_sde(std::optional<Params> p, const DriftMeasure& drift, std::uint64_t seed) {
  SdeConfig s;
  s.drift = drift;
  s.seed = seed;
  if (p) {
    s.step = p->number("step", s.step);
    s.horizon = p->number("horizon", s.horizon);
    s.paths = p->count("paths", s.paths);
    if (p->has("mollify_level")) s.mollify_level = static_cast<int>(p->integer("mollify_level"));
    s.step_guard = p->boolean("step_guard", s.step_guard);
    p->finish();
  }
  try {
    s.validate();
  } catch (const DomainError& e) {
    throw SchemaError(std::string("sde: ") + e.what());
  }
  return s;
}

EnvelopeConstants parse_envelope(std::optional<Params> p) {
  EnvelopeConstants env;
  if (!p) return env;
  env.c4 = p->number("c4", env.c4);
  env.c5 = p->number("c5", env.c5);
  env.c6 = p->number("c6", env.c6);
  if (!(env.c4 > 0.0 && env.c6 > 0.0)) p->fail("c4", "and c6 must be positive");
  p->finish();
  return env;
}

TransitionKernel parse_kernel(std::optional<Params> p) {
  if (!p) return TransitionKernel::exact_gaussian();
  const std::string mode = p->choice("mode", "exact", {"exact", "envelope"});
  TransitionKernel k = TransitionKernel::exact_gaussian();
  if (mode == "envelope")
    k = TransitionKernel::envelope(p->number("c4", 2.0), p->number("c5", 1.0), p->number("c6", 0.25));
  p->finish();
  return k;
}

std::vector<double> positive_times(Params& p, const char* key) {
  const std::vector<double> t = p.numbers(key);
  for (double s : t)
    if (!(s > 0.0)) p.fail(key, "entries must be positive");
  return t;
}

void decreasing(Params& p, const char* key, const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] < v[i - 1])) p.fail(key, "must be strictly decreasing");
}

// ---------------------------------------------------------------------------
// kato

Plan plan_kato(Params& p) {
  const int d = static_cast<int>(p.integer("d"));
  check_dimension(d);
  struct Item {
    std::string name;
    SignedMeasure mu;
    std::vector<double> t;
    double alpha;
    KatoOptions kato;
    std::optional<double> lebesgue;  // constant density value, closed form in d = 3
    std::optional<std::vector<double>> radii;
    ProfileOptions profile;
  };
  std::vector<Item> items;
  for (auto& q : p.objects("items")) {
    Item it;
    it.name = q.string("name", "item" + std::to_string(items.size()));
    const json& mj = q.raw("measure");
    it.mu = SignedMeasure::from_json(mj, d);
    if (d == 3 && mj.value("kind", "") == "density" && mj.value("profile", "") == "constant")
      it.lebesgue = mj.at("value").get<double>();
    it.t = positive_times(q, "t");
    it.alpha = q.number("alpha", 1.0);
    if (!(it.alpha > 0.0)) q.fail("alpha", "must be positive");
    it.kato = parse_kato(q.optional_object("kato"), d);
    if (auto pr = q.optional_object("profile")) {
      it.radii = pr->numbers("radii");
      decreasing(*pr, "radii", *it.radii);
      it.profile.threshold = pr->number("threshold", it.profile.threshold);
      if (pr->has("grid")) it.profile.grid = pr->points("grid", d);
      it.profile.grid_per_dim = static_cast<int>(pr->count("grid_per_dim", it.profile.grid_per_dim));
      pr->finish();
    }
    q.finish();
    items.push_back(std::move(it));
  }
  return {[items](Writer& w) {
    json out = json::array();
    std::ostringstream table;
    CsvWriter csv(table, {"item", "t", "alpha", "value", "error", "reference", "rel_error", "diverging",
                          "outside_theory"});
    for (const auto& it : items) {
      json j{{"name", it.name}};
      double worst = 0.0;
      for (double t : it.t) {
        const KatoNormResult r = kato_norm_N(it.mu, t, it.alpha, it.kato);
        const double ref = it.lebesgue ? *it.lebesgue * 2.0 * std::pow(std::numbers::pi / it.alpha, 1.5) * std::sqrt(t)
                                       : kNaN;
        const double rel = it.lebesgue ? (ref == 0.0 ? std::abs(r.value) : rel_error(r.value, ref)) : kNaN;
        if (it.lebesgue) worst = std::max(worst, rel);
        csv.row(it.name, t, it.alpha, r.value, r.error, ref, rel, r.diverging, r.outside_theory);
      }
      if (it.lebesgue) j["max_rel_error"] = worst;
      if (it.radii) {
        const KatoProfile prof = kato_membership_profile(it.mu, *it.radii, it.profile);
        w.csv("profile_" + it.name, [&](std::ostream& o) { prof.write_csv(o); });
        j["profile"] = {{"fitted_exponent", prof.fitted_exponent},
                        {"consistent", prof.consistent},
                        {"outside_theory", prof.outside_theory}};
      }
      out.push_back(j);
    }
    w.csv("kato", [&](std::ostream& o) { o << table.str(); });
    w.summary["items"] = out;
  }};
}

// ---------------------------------------------------------------------------
// kernel-checks

Plan plan_kernel_checks(Params& p) {
  double z_max = 5.0;
  std::size_t z_points = 50;
  if (auto q = p.optional_object("phi")) {
    z_max = q->number("z_max", z_max);
    z_points = q->count("points", z_points);
    if (!(z_max >= 0.0)) q->fail("z_max", "must be nonnegative");
    if (z_points < 2) q->fail("points", "must be at least 2");
    q->finish();
  }
  std::vector<double> deltas = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  double tol = 1e-8;
  if (auto q = p.optional_object("m_delta")) {
    deltas = q->numbers("deltas", deltas);
    for (double dl : deltas)
      if (!(dl > 0.0)) q->fail("deltas", "entries must be positive");
    tol = q->number("tolerance", tol);
    q->finish();
  }
  return {[=](Writer& w) {
    bool phi_ok = true, m_ok = true;
    w.csv("phi", [&](std::ostream& o) {
      CsvWriter csv(o, {"z", "phi", "tail_bound", "majorant", "holds"});
      for (std::size_t i = 0; i < z_points; ++i) {
        const double z = z_max * static_cast<double>(i) / static_cast<double>(z_points - 1);
        const PhiSeries s = phi_series(z);
        const double maj = phi_majorant(z);
        const bool holds = s.value + s.tail_bound <= maj;
        phi_ok = phi_ok && holds;
        csv.row(z, s.value, s.tail_bound, maj, holds);
      }
    });
    w.csv("m_delta", [&](std::ostream& o) {
      CsvWriter csv(o, {"delta", "numeric_sup", "closed_form", "abs_error", "pass"});
      for (double delta : deltas) {
        auto f = [&](double r) { return r * std::exp(-delta * r * r / 2.0); };
        // golden-section search on a bracket containing the mode 1/sqrt(delta)
        double a = 0.0, b = 10.0 / std::sqrt(delta);
        const double g = (std::sqrt(5.0) - 1.0) / 2.0;
        for (int it = 0; it < 200; ++it) {
          const double c = b - g * (b - a), e = a + g * (b - a);
          (f(c) > f(e) ? b : a) = f(c) > f(e) ? e : c;
        }
        const double num = f(0.5 * (a + b));
        const double closed = m_delta_unchecked(delta);
        const bool pass = std::abs(num - closed) < tol;
        m_ok = m_ok && pass;
        csv.row(delta, num, closed, std::abs(num - closed), pass);
      }
    });
    w.summary["phi_majorant_holds"] = phi_ok;
    w.summary["m_delta_matches"] = m_ok;
  }};
}

// ---------------------------------------------------------------------------
// series

// Degree-k parts of p(t, x + lambda c t, y) = p exp(lambda a - lambda^2 b) at lambda = 1.
std::vector<double> constant_taylor_parts(double t, const Point& x, const Point& y, const Point& c, int kmax) {
  const double a = c.dot(y - x), b = 0.5 * c.squaredNorm() * t;
  const double p = gaussian_p(t, x, y);
  std::vector<double> out(kmax + 1, 0.0);
  for (int i = 0; i <= kmax; ++i)
    for (int j = 0; i + 2 * j <= kmax; ++j)
      out[i + 2 * j] += p * std::pow(a, i) / std::tgamma(i + 1.0) * std::pow(-b, j) / std::tgamma(j + 1.0);
  return out;
}

double ou_density(double t, const Point& x, const Point& y, double gamma) {
  const double m = std::exp(-gamma * t);
  const double v = (1.0 - std::exp(-2.0 * gamma * t)) / (2.0 * gamma);
  return std::pow(2.0 * std::numbers::pi * v, -0.5 * x.size()) * std::exp(-(y - m * x).squaredNorm() / (2.0 * v));
}

Plan plan_series_lemma(Params& p, std::uint64_t) {
  const int d = static_cast<int>(p.integer("d"));
  check_dimension(d);
  const SignedMeasure mu = p.measure("measure", d);
  const double a1 = p.number("a1"), a2 = p.number("a2");
  const std::vector<double> times = positive_times(p, "t");
  std::optional<double> alpha;
  if (p.has("alpha")) alpha = p.number("alpha");
  const KatoOptions kato = parse_kato(p.optional_object("kato"), d);
  const double max_variation = p.number("max_variation", 0.2);
  return {[=](Writer& w) {
    std::vector<double> ratios;
    w.csv("lemma", [&](std::ostream& o) {
      CsvWriter csv(o, {"t", "ratio", "n_kato", "skipped", "argmax_x", "argmax_y"});
      for (double t : times) {
        const LemmaRatio r = convolution_lemma_ratio(a1, a2, mu, t, default_lemma_grid(mu, t), alpha, kato);
        ratios.push_back(r.value);
        csv.row(t, r.value, r.n_kato, r.skipped, pstr(r.argmax_x), pstr(r.argmax_y));
      }
    });
    const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
    const double variation = (*hi - *lo) / *lo;
    bool finite = true;
    for (double r : ratios) finite = finite && std::isfinite(r) && r > 0.0;
    w.summary["ratios"] = ratios;
    w.summary["variation"] = variation;
    w.summary["finite"] = finite;
    w.summary["stable"] = finite && variation < max_variation;
  }};
}

Plan plan_series(Params& p, std::uint64_t seed) {
  const std::string mode = p.choice("mode", "heat-kernel", {"heat-kernel", "lemma-ratio"});
  if (mode == "lemma-ratio") return plan_series_lemma(p, seed);
  const DriftMeasure drift = p.drift("drift");
  const int d = drift.dimension();
  SeriesConfig cfg = parse_series(p.optional_object("series"), drift, seed);
  const double tol = p.number("tol", 1e-3);
  if (!(tol > 0.0)) p.fail("tol", "must be positive");
  const bool fail_on_budget = p.choice("on_budget", "flag", {"flag", "fail"}) == "fail";
  struct Probe {
    double t;
    Point x, y;
  };
  std::vector<Probe> probes;
  for (auto& q : p.objects("points")) {
    Probe pr{q.number("t"), q.point("x", d), q.point("y", d)};
    if (!(pr.t > 0.0)) q.fail("t", "must be positive");
    q.finish();
    probes.push_back(pr);
  }
  std::string ref_kind = "none";
  Point c = Point::Zero(d);
  double gamma = 0.0;
  int taylor_check = 3;
  if (auto r = p.optional_object("reference")) {
    ref_kind = r->choice("kind", "none", {"none", "constant", "ou"});
    if (ref_kind == "constant") {
      c = r->point("c", d);
      taylor_check = static_cast<int>(r->integer("taylor_check", taylor_check));
    }
    if (ref_kind == "ou") {
      gamma = r->number("gamma");
      if (!(gamma > 0.0)) r->fail("gamma", "must be positive");
    }
    r->finish();
  }
  const double max_rel = p.number("max_rel_error", tol);
  return {[=](Writer& w) {
    std::vector<SweepRow> rows;
    for (const auto& pr : probes) rows.push_back({pr.t, pr.x, pr.y, heat_kernel(pr.t, pr.x, pr.y, cfg, tol)});
    if (fail_on_budget)
      for (const auto& r : rows)
        if (r.estimate.budget_exhausted && !r.estimate.converged)
          throw BudgetError("series: evaluation budget exhausted before tolerance at t = " + csv_number(r.t),
                            r.estimate.truncation_bound + r.estimate.quad_error);
    double worst = 0.0;
    bool terms_ok = true;
    json points = json::array();
    w.csv("series", [&](std::ostream& o) {
      CsvWriter csv(o, {"t", "x", "y", "value", "reference", "rel_error", "trunc_bound", "quad_err", "terms_used",
                        "converged"});
      for (const auto& r : rows) {
        double ref = kNaN;
        if (ref_kind == "constant") ref = gaussian_p(r.t, (r.x + c * r.t).eval(), r.y);
        if (ref_kind == "ou") ref = ou_density(r.t, r.x, r.y, gamma);
        const double rel = ref_kind == "none" ? kNaN : rel_error(r.estimate.value, ref);
        if (ref_kind != "none") worst = std::max(worst, rel);
        csv.row(r.t, pstr(r.x), pstr(r.y), r.estimate.value, ref, rel, r.estimate.truncation_bound,
                r.estimate.quad_error, r.estimate.terms_used(), r.estimate.converged);
        points.push_back({{"t", r.t},
                          {"value", r.estimate.value},
                          {"rho", r.estimate.rho},
                          {"certified", r.estimate.truncation_certified},
                          {"budget_exhausted", r.estimate.budget_exhausted},
                          {"converged", r.estimate.converged}});
      }
    });
    w.csv("terms", [&](std::ostream& o) {
      CsvWriter csv(o, {"t", "x", "y", "k", "term", "error", "reference"});
      for (const auto& r : rows) {
        const int kmax = r.estimate.terms_used() - 1;
        const std::vector<double> parts =
            ref_kind == "constant" ? constant_taylor_parts(r.t, r.x, r.y, c, kmax) : std::vector<double>();
        for (int k = 0; k <= kmax; ++k) {
          const double part = parts.empty() ? kNaN : parts[k];
          const double term = r.estimate.terms[k];
          if (!parts.empty() && k <= taylor_check) {
            // three significant digits
            const bool match = std::abs(term - part) <= 5e-4 * std::abs(part) + 1e-15 * r.estimate.terms[0];
            terms_ok = terms_ok && match;
          }
          csv.row(r.t, pstr(r.x), pstr(r.y), k, term, r.estimate.term_errors[k], part);
        }
      }
    });
    w.summary["points"] = points;
    if (ref_kind != "none") {
      w.summary["max_rel_error"] = worst;
      w.summary["within_tolerance"] = worst < max_rel;
    }
    if (ref_kind == "constant") w.summary["terms_match_taylor"] = terms_ok;
  }};
}

// ---------------------------------------------------------------------------
// simulate

Plan plan_simulate(Params& p, std::uint64_t seed) {
  const DriftMeasure drift = p.drift("drift");
  const int d = drift.dimension();
  const SdeConfig cfg = parse_sde(p.optional_object("sde"), drift, seed);
  const std::string est = p.choice("estimator", "ensemble", {"ensemble", "sup-tail", "ball", "kde", "coupling"});
  if (est == "ensemble") {
    const Point x = p.point("x", d);
    const int every = static_cast<int>(p.count("record_every", 1));
    return {[=](Writer& w) {
      const PathEnsemble ens = simulate_paths(cfg, x, every);
      w.csv("ensemble", [&](std::ostream& o) { ens.write_csv(o); });
      w.summary["paths"] = ens.paths();
      w.summary["failed"] = ens.failed;
      w.summary["times"] = ens.times.size();
    }};
  }
  if (est == "sup-tail") {
    const Point x = p.point("x", d);
    std::vector<std::pair<double, double>> cases;
    for (auto& q : p.objects("cases")) {
      cases.emplace_back(q.number("delta"), q.number("eps"));
      q.finish();
    }
    return {[=](Writer& w) {
      json rows = json::array();
      w.csv("sup_tail", [&](std::ostream& o) {
        CsvWriter csv(o, {"delta", "eps", "estimate", "stderr", "count", "upper95", "exact_zero", "rare_event"});
        for (auto [delta, eps] : cases) {
          const TailEstimate t = sup_A_tail(cfg, x, delta, eps);
          csv.row(delta, eps, t.estimate.mean, t.estimate.std_error, t.exceedances, t.upper95, t.exact_zero,
                  t.rare_event);
          rows.push_back(estimator_record("sup_A_tail", t.estimate, cfg, {{"delta", delta}, {"eps", eps}}));
        }
      });
      w.summary["records"] = rows;
    }};
  }
  if (est == "ball") {
    struct Case {
      SdeConfig cfg;
      Point x, y;
      double eps, r;
    };
    std::vector<Case> cases;
    const EnvelopeConstants env = parse_envelope(p.optional_object("envelope"));
    const KatoOptions kato = parse_kato(p.optional_object("kato"), d);
    for (auto& q : p.objects("cases")) {
      Case c{cfg, q.point("x", d), q.point("y", d), q.number("eps"), q.number("r")};
      if (q.has("drift")) {
        c.cfg.drift = q.drift("drift");
        if (c.cfg.drift.dimension() != d) q.fail("drift", "dimension differs from the top-level drift");
      }
      if (!(c.eps > 0.0)) q.fail("eps", "must be positive");
      if (!(c.r > 0.0)) q.fail("r", "must be positive");
      q.finish();
      cases.push_back(c);
    }
    return {[=](Writer& w) {
      bool all = true;
      w.csv("ball", [&](std::ostream& o) {
        CsvWriter csv(o, {"x", "y", "eps", "r", "estimate", "stderr", "gaussian", "lower_bound", "drift_free",
                          "pass"});
        for (const auto& c : cases) {
          const BallEstimate b = ball_probability(c.cfg, c.x, c.y, c.eps, c.r, env, kato);
          const bool free = DriftField::from_measure(c.cfg.drift, c.cfg.mollify_level).is_zero();
          const double m = b.probability.estimate.mean, se = b.probability.estimate.std_error;
          const bool pass = free ? std::abs(m - b.gaussian_probability) <= 3.0 * se : m >= b.lower_bound - 3.0 * se;
          all = all && pass;
          csv.row(pstr(c.x), pstr(c.y), c.eps, c.r, m, se, b.gaussian_probability, b.lower_bound, free, pass);
        }
      });
      w.summary["all_pass"] = all;
    }};
  }
  if (est == "kde") {
    const Point x = p.point("x", d);
    const double t = p.number("t");
    const std::vector<Point> ys = p.points("y", d);
    const double bw = p.number("bandwidth", 0.0);
    const int every = static_cast<int>(p.count("record_every", 1));
    SdeConfig c = cfg;
    c.horizon = t;
    return {[=](Writer& w) {
      const PathEnsemble ens = simulate_paths(c, x, every);
      w.csv("kde", [&](std::ostream& o) {
        CsvWriter csv(o, {"y", "estimate", "stderr", "bandwidth", "at_half", "at_double", "near_samples", "flagged"});
        for (const auto& y : ys) {
          const KdeEstimate k = kde_density(ens, t, y, bw);
          csv.row(pstr(y), k.estimate.mean, k.estimate.std_error, k.bandwidth, k.at_half, k.at_double,
                  k.near_samples, k.flagged);
        }
      });
      w.summary["failed"] = ens.failed;
    }};
  }
  const Point x = p.point("x", d);
  const std::vector<int> levels = p.integers("levels");
  return {[=](Writer& w) {
    const auto out = mollification_coupling(cfg, x, levels);
    bool decreasing = true;
    w.csv("coupling", [&](std::ostream& o) {
      CsvWriter csv(o, {"level", "median", "q90", "abs_integral_median", "abs_integral_q90"});
      for (std::size_t i = 0; i < out.size(); ++i) {
        const auto& l = out[i];
        if (i) decreasing = decreasing && l.median < out[i - 1].median;
        csv.row(l.level, l.median, l.q90, l.abs_integral_median, l.abs_integral_q90);
      }
    });
    w.summary["medians_decreasing"] = decreasing;
  }};
}

// ---------------------------------------------------------------------------
// moments

Plan plan_moments(Params& p, std::uint64_t seed) {
  const int d = static_cast<int>(p.integer("d"));
  check_dimension(d);
  const SignedMeasure functional = p.measure("functional", d);
  const DriftMeasure drift = p.has("drift") ? p.drift("drift") : DriftMeasure::zero(d);
  if (drift.dimension() != d) p.fail("drift", "dimension differs from d");
  const SdeConfig cfg = parse_sde(p.optional_object("sde"), drift, seed);
  const Point x = p.point("x", d);
  const std::vector<double> times = positive_times(p, "t");
  const std::vector<int> powers = p.integers("powers");
  for (int n : powers)
    if (n < 0 || n > 6) p.fail("powers", "entries must lie in [0, 6]");
  const std::vector<double> lambdas = p.numbers("lambdas", {});
  for (double l : lambdas)
    if (!(l >= 0.0)) p.fail("lambdas", "entries must be nonnegative");
  const TransitionKernel kernel = parse_kernel(p.optional_object("kernel"));
  const KatoOptions kato = parse_kato(p.optional_object("kato"), d);
  const bool oracle = p.boolean("oracle", false);
  if (!functional.has_density() || !functional.is_nonnegative())
    p.fail("functional", "must be a nonnegative density");
  return {[=](Writer& w) {
    const bool free = DriftField::from_measure(cfg.drift, cfg.mollify_level).is_zero();
    bool bounds = true, oracles = true;
    std::ostringstream mt, lt;
    CsvWriter mcsv(mt, {"t", "n", "mean", "stderr", "bound", "lambda_t", "oracle", "pass"});
    CsvWriter lcsv(lt, {"t", "lambda", "mean", "stderr", "bound_simple", "bound_sharp", "pass"});
    for (double t : times) {
      const auto m = estimate_moments(cfg, x, powers, t, functional, kernel, kato);
      for (std::size_t i = 0; i < powers.size(); ++i) {
        const int n = powers[i];
        const auto& e = m[i];
        double ref = kNaN;
        if (oracle && free && n <= 2) {
          ref = brownian_moment_quadrature(functional, x, t, n);
          oracles = oracles && std::abs(e.estimate.mean - ref) <= 3.0 * e.estimate.std_error;
        }
        const bool pass = e.estimate.mean <= e.bound + 3.0 * e.estimate.std_error;
        bounds = bounds && pass;
        mcsv.row(t, n, e.estimate.mean, e.estimate.std_error, e.bound, e.lambda_t, ref, pass);
      }
      for (double lambda : lambdas) {
        const LaplaceEstimate l = estimate_laplace(cfg, x, lambda, t, functional, kernel, kato);
        const bool pass = l.estimate.mean <= l.bound_simple + 3.0 * l.estimate.std_error;
        bounds = bounds && pass;
        lcsv.row(t, lambda, l.estimate.mean, l.estimate.std_error, l.bound_simple, l.bound_sharp, pass);
      }
    }
    w.csv("moments", [&](std::ostream& o) { o << mt.str(); });
    if (!lambdas.empty()) w.csv("laplace", [&](std::ostream& o) { o << lt.str(); });
    w.summary["bounds_hold"] = bounds;
    if (oracle) w.summary["oracle_match"] = oracles;
  }};
}

// ---------------------------------------------------------------------------
// varadhan

Plan plan_varadhan(Params& p, std::uint64_t seed) {
  const DriftMeasure drift = p.drift("drift");
  const int d = drift.dimension();
  VaradhanConfig cfg;
  cfg.mode = p.choice("mode", "parametrix", {"parametrix", "kde"}) == "kde" ? DensityMode::Kde
                                                                          : DensityMode::Parametrix;
  cfg.series = parse_series(p.optional_object("series"), drift, seed);
  cfg.series_tol = p.number("tol", cfg.series_tol);
  cfg.sde = parse_sde(p.optional_object("sde"), drift, seed);
  cfg.bandwidth = p.number("bandwidth", 0.0);
  cfg.max_relative_error = p.number("max_relative_error", cfg.max_relative_error);
  const std::vector<double> grid = positive_times(p, "t_grid");
  decreasing(p, "t_grid", grid);
  std::vector<std::pair<Point, Point>> pairs;
  for (auto& q : p.objects("pairs")) {
    pairs.emplace_back(q.point("x", d), q.point("y", d));
    q.finish();
  }
  const bool free_check = p.boolean("drift_free_check", false);
  const double window = p.number("limit_window", 0.05);
  return {[=](Writer& w) {
    json curves = json::array();
    double panel = 0.0;
    bool all_in = true;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto& [x, y] = pairs[i];
      const AsymptoticCurve c = varadhan_curve(x, y, grid, cfg);
      w.csv("varadhan_" + std::to_string(i), [&](std::ostream& o) { c.write_csv(o); });
      json j = c.to_json();
      if (c.limit.ok) {
        const double dev = std::abs(c.limit.limit - c.target);
        panel = std::max(panel, dev);
        all_in = all_in && dev <= window;
      } else {
        all_in = false;
      }
      if (free_check) {
        VaradhanConfig zero = cfg;
        zero.series.drift = DriftMeasure::zero(d);
        zero.sde.drift = DriftMeasure::zero(d);
        zero.series.mollify_level.reset();
        zero.sde.mollify_level.reset();
        const AsymptoticCurve z = varadhan_curve(x, y, grid, zero);
        double worst = 0.0;
        for (std::size_t k = 0; k < grid.size(); ++k) {
          const double t = grid[k];
          const double closed = -0.5 * (x - y).squaredNorm() - 0.5 * d * t * std::log(2.0 * std::numbers::pi * t);
          worst = std::max(worst, std::abs(z.values[k] - closed) / std::abs(closed));
        }
        j["drift_free_max_rel_error"] = worst;
      }
      curves.push_back(j);
    }
    w.summary["curves"] = curves;
    w.summary["panel_max_deviation"] = panel;
    w.summary["limits_within_window"] = all_in;
  }};
}

// ---------------------------------------------------------------------------
// ldp

Plan plan_ldp(Params& p, std::uint64_t seed) {
  const DriftMeasure drift = p.drift("drift");
  const int d = drift.dimension();
  const SdeConfig cfg = parse_sde(p.optional_object("sde"), drift, seed);
  const std::string mode = p.choice("mode", "tube", {"tube", "equivalence"});
  const Point x = p.point("x", d);
  const std::vector<double> eps = positive_times(p, "eps_grid");
  decreasing(p, "eps_grid", eps);
  if (mode == "tube") {
    const PiecewiseLinearPath f = PiecewiseLinearPath::from_json(p.raw("path"));
    if (f.dimension() != d) p.fail("path", "dimension differs from the drift");
    const double rho = p.number("rho");
    if (!(rho > 0.0)) p.fail("rho", "must be positive");
    const int knots = static_cast<int>(p.count("knots", 50));
    return {[=](Writer& w) {
      const TubeTable t = ldp_tube_experiment(x, f, rho, eps, cfg, knots);
      w.csv("ldp", [&](std::ostream& o) { t.write_csv(o); });
      w.summary = t.to_json();
    }};
  }
  const double delta = p.number("delta");
  if (!(delta > 0.0)) p.fail("delta", "must be positive");
  const EnvelopeConstants env = parse_envelope(p.optional_object("envelope"));
  const KatoOptions kato = parse_kato(p.optional_object("kato"), d);
  return {[=](Writer& w) {
    const EquivalenceTable t = exp_equivalence_diag(x, delta, eps, cfg, env, kato);
    w.csv("ldp", [&](std::ostream& o) { t.write_csv(o); });
    w.summary = t.to_json();
  }};
}

Plan plan(const ExperimentConfig& cfg) {
  Params p(cfg.parameters, "parameters");
  Plan out;
  const std::string& k = cfg.experiment;
  if (k == "kato") out = plan_kato(p);
  else if (k == "kernel-checks") out = plan_kernel_checks(p);
  else if (k == "series") out = plan_series(p, cfg.seed);
  else if (k == "simulate") out = plan_simulate(p, cfg.seed);
  else if (k == "moments") out = plan_moments(p, cfg.seed);
  else if (k == "varadhan") out = plan_varadhan(p, cfg.seed);
  else if (k == "ldp") out = plan_ldp(p, cfg.seed);
  else throw SchemaError("experiment: unknown kind '" + k + "'");
  p.finish();
  return out;
}

std::string utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string error_category(const std::exception& e) {
  if (dynamic_cast<const SchemaError*>(&e) || dynamic_cast<const DomainError*>(&e)) return "validation";
  if (dynamic_cast<const RefusalError*>(&e)) return "refusal";
  if (dynamic_cast<const BudgetError*>(&e)) return "budget";
  return "internal";
}

}  // namespace

const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds = {"kato",    "kernel-checks", "series", "simulate",
                                                 "moments", "varadhan",      "ldp"};
  return kinds;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("config: expected an object");
  reject_unknown(j, {"schema_version", "experiment", "parameters", "seed", "output"}, "config");
  ExperimentConfig c;
  if (!j.contains("schema_version") || !j.at("schema_version").is_string())
    throw SchemaError("config/schema_version: required string");
  c.schema_version = j.at("schema_version").get<std::string>();
  if (c.schema_version != kSchemaVersion)
    throw SchemaError("config/schema_version: unsupported version '" + c.schema_version + "'");
  if (!j.contains("experiment") || !j.at("experiment").is_string())
    throw SchemaError("config/experiment: required string");
  c.experiment = j.at("experiment").get<std::string>();
  const auto& kinds = experiment_kinds();
  if (std::find(kinds.begin(), kinds.end(), c.experiment) == kinds.end())
    throw SchemaError("config/experiment: unknown kind '" + c.experiment + "'");
  if (j.contains("parameters")) {
    if (!j.at("parameters").is_object()) throw SchemaError("config/parameters: expected an object");
    c.parameters = j.at("parameters");
  }
  if (j.contains("seed")) {
    const json& seed = j.at("seed");
    if (!seed.is_number_integer() || (!seed.is_number_unsigned() && seed.get<long long>() < 0))
      throw SchemaError("config/seed: expected a nonnegative integer");
    c.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("output")) {
    if (!j.at("output").is_string()) throw SchemaError("config/output: expected a string");
    c.output = j.at("output").get<std::string>();
  }
  return c;
}

json ExperimentConfig::to_json() const {
  return json{{"schema_version", schema_version},
              {"experiment", experiment},
              {"parameters", parameters},
              {"seed", seed},
              {"output", output}};
}

void validate_experiment(const ExperimentConfig& cfg) {
  try {
    plan(cfg);
  } catch (const DomainError& e) {
    throw SchemaError(e.what());
  }
}

fs::path resolve_output_prefix(const ExperimentConfig& cfg, const std::optional<std::string>& prefix) {
  fs::path p = prefix ? *prefix : (cfg.output.empty() ? cfg.experiment : cfg.output);
  if (p.is_relative())
    if (const char* dir = std::getenv("KATOLAB_OUTPUT_DIR"); dir && *dir) p = fs::path(dir) / p;
  return p;
}

RunResult run_experiment(const ExperimentConfig& cfg, const std::optional<std::string>& prefix) {
  Plan pl;
  try {
    pl = plan(cfg);
  } catch (const DomainError& e) {
    throw SchemaError(e.what());
  }
  const fs::path out = resolve_output_prefix(cfg, prefix);
  Writer w(out);
  const std::string started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  json manifest{{"config", cfg.to_json()},
                {"seed", cfg.seed},
                {"versions",
                 {{"katolab", KATOLAB_VERSION},
                  {"compiler", __VERSION__},
                  {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                std::to_string(EIGEN_MINOR_VERSION)},
                  {"boost", BOOST_LIB_VERSION},
                  {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                        std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                        std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
                {"workers", worker_count()},
                {"started_at", started}};
  auto finish = [&](const std::string& status) {
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest["status"] = status;
    manifest["wall_seconds"] = wall;
    json arts = json::array();
    for (const auto& a : w.artifacts) arts.push_back(a.string());
    manifest["artifacts"] = arts;
    const fs::path mpath = out.string() + "_manifest.json";
    if (mpath.has_parent_path()) fs::create_directories(mpath.parent_path());
    std::ofstream(mpath, std::ios::binary) << manifest.dump(2) << "\n";
    return wall;
  };
  try {
    pl.run(w);
  } catch (const std::exception& e) {
    manifest["error"] = {{"category", error_category(e)}, {"message", e.what()}};
    finish("error");
    throw;
  }
  w.write(out.string() + "_summary.json", w.summary.dump(2) + "\n");
  RunResult r;
  r.summary = w.summary;
  r.artifacts = w.artifacts;
  r.wall_seconds = finish("ok");
  r.artifacts.push_back(out.string() + "_manifest.json");
  return r;
}

}  // namespace katolab
