// Copyright (c) 2026, katolab contributors
// SPDX-License-Identifier: Apache-2.0

// Acceptance gate. Each criterion runs its preset through run_experiment,
// reads the written artifacts back and checks them against oracles computed
// here. One PASS/FAIL line per criterion; the exit status counts failures.

#include "katolab/asymptotics.hpp"
#include "katolab/experiments.hpp"
#include "katolab/kernels.hpp"
#include "katolab/types.hpp"

#include <Eigen/Dense>
#include <boost/math/distributions/binomial.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/minima.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

using namespace katolab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw std::runtime_error("missing column " + name);
  }
  double num(std::size_t row, const std::string& name) const { return std::stod(rows[row][col(name)]); }
  const std::string& str(std::size_t row, const std::string& name) const { return rows[row][col(name)]; }
  std::size_t size() const { return rows.size(); }
};

// RFC 4180 with quoted fields.
Table read_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string s = buf.str();
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (quoted) {
      if (c == '"' && i + 1 < s.size() && s[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      record.push_back(field);
      field.clear();
    } else if (c == '\r') {
    } else if (c == '\n') {
      record.push_back(field);
      field.clear();
      records.push_back(record);
      record.clear();
    } else {
      field += c;
    }
  }
  Table t;
  t.header = records.at(0);
  t.rows.assign(records.begin() + 1, records.end());
  return t;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return json::parse(in);
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char b[64];
  std::snprintf(b, sizeof b, f, a);
  return b;
}

fs::path out_dir() {
  const fs::path d = fs::temp_directory_path() / "katolab_acceptance";
  fs::create_directories(d);
  return d;
}

// Runs the one preset reproducing `criterion` and returns its output prefix.
std::string run_preset(int criterion, double& seconds) {
  for (const auto& p : presets()) {
    if (p.criterion != criterion) continue;
    const std::string prefix = (out_dir() / p.name).string();
    const auto t0 = std::chrono::steady_clock::now();
    run_experiment(ExperimentConfig::from_json(p.config), prefix);
    seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return prefix;
  }
  throw std::runtime_error("no preset for criterion " + std::to_string(criterion));
}

Point parse_point(const std::string& s) {
  const json j = json::parse(s);
  Point p(static_cast<int>(j.size()));
  for (int i = 0; i < p.size(); ++i) p(i) = j[i].get<double>();
  return p;
}

double gauss_density(double var, const Point& mean, const Point& y) {
  const double d = static_cast<double>(y.size());
  return std::pow(2.0 * kPi * var, -d / 2.0) * std::exp(-(y - mean).squaredNorm() / (2.0 * var));
}

// Physicists' Hermite polynomial H_k.
double hermite(int k, double x) {
  double h0 = 1.0, h1 = 2.0 * x;
  if (k == 0) return h0;
  for (int n = 1; n < k; ++n) {
    const double h2 = 2.0 * x * h1 - 2.0 * n * h0;
    h0 = h1;
    h1 = h2;
  }
  return h1;
}

template <typename F>
double integrate(F f, double a, double b) {
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 12, 1e-13);
}

// ---------------------------------------------------------------------------

Outcome criterion1(double& secs) {
  const std::string pre = run_preset(1, secs);
  const Table s = read_csv(pre + "_series.csv");
  const Point c = (Point(3) << 1, 0, 0).finished();
  const double t = s.num(0, "t");
  const Point x = parse_point(s.str(0, "x")), y = parse_point(s.str(0, "y"));
  const double exact = gauss_density(t, x + c * t, y);
  const double rel = std::abs(s.num(0, "value") - exact) / exact;

  // p(t, x + ct, y) / p(t, x, y) = exp(a - b) = sum_k H_k(a / 2 sqrt b) b^{k/2} / k!
  const Table terms = read_csv(pre + "_terms.csv");
  const double a = c.dot(y - x), b = 0.5 * c.squaredNorm() * t;
  const double p0 = gauss_density(t, x, y);
  double worst = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const int k = static_cast<int>(terms.num(i, "k"));
    if (k > 3) continue;
    const double part = p0 * hermite(k, a / (2.0 * std::sqrt(b))) * std::pow(b, k / 2.0) / std::tgamma(k + 1.0);
    worst = std::max(worst, std::abs(terms.num(i, "term") - part) / std::abs(part));
  }
  const bool pass = rel < 1e-2 && worst < 5e-4 && secs <= 60.0;
  return {pass, "rel error " + fmt("%.3e", rel) + " (< 1e-2), worst term k<=3 rel diff " + fmt("%.2e", worst) +
                    " (< 5e-4, 3 significant digits)"};
}

Outcome criterion2(double& secs) {
  const std::string pre = run_preset(2, secs);
  const Table s = read_csv(pre + "_series.csv");
  const double gamma = 0.4;
  double worst = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double t = s.num(i, "t");
    const Point x = parse_point(s.str(i, "x")), y = parse_point(s.str(i, "y"));
    // X_t = e^{-gamma t} x + N(0, (1 - e^{-2 gamma t}) / (2 gamma) I)
    const double var = -std::expm1(-2.0 * gamma * t) / (2.0 * gamma);
    const double exact = gauss_density(var, std::exp(-gamma * t) * x, y);
    worst = std::max(worst, std::abs(s.num(i, "value") - exact) / exact);
  }
  return {s.size() == 5 && worst < 3e-2, fmt("%.0f", static_cast<double>(s.size())) + " probe points, max rel error " +
                                             fmt("%.3e", worst) + " (< 3e-2)"};
}

// E A_t^2 for f(z) = exp(-|z|^2 / (2 w^2)) in d = 3 under Brownian motion from 0:
// 2 int_{s<u} det(I + 2a Sigma_{s,u})^{-3/2}, a = 1 / (2 w^2).
double second_moment_oracle(double t, double w) {
  const double a = 1.0 / (2.0 * w * w);
  return 2.0 * integrate(
                   [&](double s) {
                     return integrate(
                         [&](double u) {
                           const double det = (1.0 + 2.0 * a * s) * (1.0 + 2.0 * a * u) - 4.0 * a * a * s * s;
                           return std::pow(det, -1.5);
                         },
                         s, t);
                   },
                   0.0, t);
}

Outcome criterion3(double& secs) {
  const std::string pre = run_preset(3, secs);
  const Table m = read_csv(pre + "_moments.csv");
  int cells = 0, held = 0;
  double z2 = 0.0;
  bool oracle_ok = true;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double mean = m.num(i, "mean"), se = m.num(i, "stderr");
    ++cells;
    if (mean <= m.num(i, "bound") + 3.0 * se) ++held;
    if (m.num(i, "n") == 2) {
      const double ref = second_moment_oracle(m.num(i, "t"), 0.5);
      const double z = std::abs(mean - ref) / se;
      z2 = std::max(z2, z);
      oracle_ok = oracle_ok && z <= 3.0;
    }
  }
  const bool pass = cells == 6 && held == 6 && oracle_ok && secs <= 300.0;
  return {pass, fmt("%.0f", held) + "/6 cells within bound + 3 stderr, n=2 oracle max |z| " + fmt("%.2f", z2) +
                    " (<= 3), " + fmt("%.0f", secs) + " s (<= 300)"};
}

Outcome criterion4(double& secs) {
  const std::string pre = run_preset(4, secs);
  const Table l = read_csv(pre + "_laplace.csv");
  const Table m = read_csv(pre + "_moments.csv");
  const double lam_t = m.num(0, "lambda_t");
  int held = 0;
  double worst_ratio = 0.0, bound_mismatch = 0.0;
  for (std::size_t i = 0; i < l.size(); ++i) {
    const double lambda = l.num(i, "lambda"), t = l.num(i, "t");
    const double bound = 2.0 * std::exp(2.0 * lambda * lambda * t * lam_t * lam_t);
    bound_mismatch = std::max(bound_mismatch, std::abs(bound - l.num(i, "bound_simple")) / bound);
    const double mean = l.num(i, "mean"), se = l.num(i, "stderr");
    if (mean <= bound + 3.0 * se) ++held;
    worst_ratio = std::max(worst_ratio, mean / bound);
  }
  const bool pass = l.size() == 3 && held == 3 && bound_mismatch < 1e-12;
  return {pass, fmt("%.0f", held) + "/3 lambdas within 2 exp(2 lambda^2 t Lambda^2) + 3 stderr, max mean/bound " +
                    fmt("%.3f", worst_ratio)};
}

Outcome criterion5(double& secs) {
  const std::string pre = run_preset(5, secs);
  const Table phi = read_csv(pre + "_phi.csv");
  bool phi_ok = phi.size() == 50;
  double zmin = 1e300, zmax = -1e300;
  for (std::size_t i = 0; i < phi.size(); ++i) {
    const double z = phi.num(i, "z");
    zmin = std::min(zmin, z);
    zmax = std::max(zmax, z);
    phi_ok = phi_ok && phi.num(i, "phi") + phi.num(i, "tail_bound") <= (1.0 + z) * std::exp(z * z);
  }
  phi_ok = phi_ok && zmin == 0.0 && zmax == 5.0;
  const Table md = read_csv(pre + "_m_delta.csv");
  bool m_ok = md.size() == 9;
  double worst = 0.0;
  for (std::size_t i = 0; i < md.size(); ++i) {
    const double delta = md.num(i, "delta");
    const auto neg = [delta](double r) { return -r * std::exp(-delta * r * r / 2.0); };
    const auto [r, v] = boost::math::tools::brent_find_minima(neg, 0.0, 20.0 / std::sqrt(delta), std::numeric_limits<double>::digits);
    (void)r;
    const double err = std::abs(-v - 1.0 / std::sqrt(std::numbers::e * delta));
    worst = std::max(worst, err);
    m_ok = m_ok && err < 1e-8 && md.num(i, "abs_error") < 1e-8;
  }
  return {phi_ok && m_ok, "phi majorant on 50 points of [0,5]: " + std::string(phi_ok ? "holds" : "violated") +
                              ", m_delta max abs error " + fmt("%.2e", worst) + " (< 1e-8)"};
}

Outcome criterion6(double& secs) {
  const std::string pre = run_preset(6, secs);
  const Table l = read_csv(pre + "_lemma.csv");
  double lo = 1e300, hi = 0.0;
  bool finite = l.size() == 3;
  for (std::size_t i = 0; i < l.size(); ++i) {
    const double r = l.num(i, "ratio");
    finite = finite && std::isfinite(r) && r > 0.0;
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  // variation relative to the smallest ratio
  const double variation = (hi - lo) / lo;
  return {finite && variation < 0.2, "ratios in [" + fmt("%.4f", lo) + ", " + fmt("%.4f", hi) + "], variation " +
                                          fmt("%.1f%%", 100.0 * variation) + " (< 20%)"};
}

Outcome criterion7(double& secs) {
  const std::string pre = run_preset(7, secs);
  // drift-free curve on the same panel, against the closed form computed here
  const Point x = (Point(3) << -0.5, 0, 0).finished(), y = (Point(3) << 0.5, 0, 0).finished();
  const std::vector<double> grid = {0.2, 0.1, 0.05, 0.025, 0.0125};
  VaradhanConfig zero;
  zero.series.drift = DriftMeasure::zero(3);
  const AsymptoticCurve free = varadhan_curve(x, y, grid, zero);
  double free_err = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double t = grid[i];
    const double closed = t * std::log(gauss_density(t, x, y));
    free_err = std::max(free_err, std::abs(free.values[i] - closed) / std::abs(closed));
  }

  // a + b t log t + c t through the three smallest reliable t
  const Table v = read_csv(pre + "_varadhan_0.csv");
  if (v.size() < 3) return {false, "fewer than three reliable points"};
  Eigen::Matrix3d A;
  Eigen::Vector3d rhs;
  for (int r = 0; r < 3; ++r) {
    const std::size_t i = v.size() - 3 + r;
    const double t = v.num(i, "t");
    A.row(r) << 1.0, t * std::log(t), t;
    rhs(r) = v.num(i, "tlogq");
  }
  const double limit = A.partialPivLu().solve(rhs)(0);
  const json summary = read_json(pre + "_summary.json");
  const double reported = summary.at("curves").at(0).at("extrapolated_limit").get<double>();
  const bool pass = free_err <= 1e-12 && limit >= -0.55 && limit <= -0.45 && std::abs(limit - reported) < 1e-9 &&
                    secs <= 600.0;
  return {pass, "drift-free max rel error " + fmt("%.1e", free_err) + " (<= 1e-12), bump limit " +
                    fmt("%.5f", limit) + " in [-0.55, -0.45], " + fmt("%.0f", secs) + " s (<= 600)"};
}

// One-sided 95% Clopper-Pearson upper bound by bisection on the binomial cdf.
double upper95(std::size_t k, std::size_t n) {
  if (k == n) return 1.0;
  double lo = static_cast<double>(k) / n, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double cdf = boost::math::cdf(boost::math::binomial(static_cast<double>(n), mid), static_cast<double>(k));
    (cdf > 0.05 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Outcome criterion8(double& secs) {
  const std::string pre = run_preset(8, secs);
  const json s = read_json(pre + "_summary.json");
  std::vector<double> eps, ups;
  bool full = true;
  for (const auto& r : s.at("rows")) {
    const auto k = r.at("tail").at("count").get<std::size_t>();
    const auto n = r.at("tail").at("estimate").at("n_samples").get<std::size_t>();
    full = full && n == 100000;
    eps.push_back(r.at("epsilon").get<double>());
    ups.push_back(eps.back() * std::log(upper95(k, n)));
  }
  bool decreasing = eps == std::vector<double>{0.2, 0.1, 0.05};
  for (std::size_t i = 1; i < ups.size(); ++i) decreasing = decreasing && ups[i] < ups[i - 1];
  std::string vals;
  for (double u : ups) vals += (vals.empty() ? "" : ", ") + fmt("%.4f", u);
  return {full && decreasing, "eps log upper95 along eps = 0.2, 0.1, 0.05: " + vals +
                                  (decreasing ? " (strictly decreasing)" : " (not strictly decreasing)")};
}

// P(|x + W_r - y| < eps) in d = 3 from the radial law of |W_r - (y - x)|.
double ball_oracle(const Point& x, const Point& y, double eps, double r) {
  const double rho = (y - x).norm();
  if (rho == 0.0)
    return integrate([&](double s) { return 4.0 * kPi * s * s * std::pow(2.0 * kPi * r, -1.5) * std::exp(-s * s / (2.0 * r)); },
                     0.0, eps);
  return integrate(
      [&](double s) {
        return s / rho / std::sqrt(2.0 * kPi * r) *
               (std::exp(-(s - rho) * (s - rho) / (2.0 * r)) - std::exp(-(s + rho) * (s + rho) / (2.0 * r)));
      },
      0.0, eps);
}

Outcome criterion9(double& secs) {
  const std::string pre = run_preset(9, secs);
  const Table b = read_csv(pre + "_ball.csv");
  int free_n = 0, free_ok = 0, bump_ok = 0;
  std::vector<double> bump_r;
  double worst_z = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double m = b.num(i, "estimate"), se = b.num(i, "stderr");
    if (b.str(i, "drift_free") == "true") {
      ++free_n;
      const double ref = ball_oracle(parse_point(b.str(i, "x")), parse_point(b.str(i, "y")), b.num(i, "eps"), b.num(i, "r"));
      worst_z = std::max(worst_z, std::abs(m - ref) / se);
      if (std::abs(m - ref) <= 3.0 * se) ++free_ok;
    } else {
      bump_r.push_back(b.num(i, "r"));
      if (m >= b.num(i, "lower_bound") - 3.0 * se) ++bump_ok;
    }
  }
  const bool pass = free_n == 5 && free_ok == 5 && bump_r == std::vector<double>{0.05, 0.1} && bump_ok == 2;
  return {pass, fmt("%.0f", free_ok) + "/5 drift-free points within 3 stderr (max |z| " + fmt("%.2f", worst_z) +
                    "), " + fmt("%.0f", bump_ok) + "/2 bump radii above lower bound - 3 stderr"};
}

Outcome criterion10(double& secs) {
  const std::string pre = run_preset(10, secs);
  const Table k = read_csv(pre + "_kato.csv");
  double worst = 0.0;
  int leb = 0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    if (k.str(i, "item") != "lebesgue") continue;
    ++leb;
    const double alpha = k.num(i, "alpha"), t = k.num(i, "t");
    const double closed = 2.0 * std::pow(kPi / alpha, 1.5) * std::sqrt(t);
    worst = std::max(worst, std::abs(k.num(i, "value") - closed) / closed);
  }
  const Table prof = read_csv(pre + "_profile_cantor.csv");
  // least-squares slope of log sup-value against log r
  Eigen::MatrixXd A(prof.size(), 2);
  Eigen::VectorXd rhs(prof.size());
  for (std::size_t i = 0; i < prof.size(); ++i) {
    A(i, 0) = 1.0;
    A(i, 1) = std::log(prof.num(i, "r"));
    rhs(i) = std::log(prof.num(i, "value"));
  }
  const double slope = A.colPivHouseholderQr().solve(rhs)(1);
  const bool pass = leb > 0 && worst < 1e-4 && slope >= 0.5 && slope <= 0.75;
  return {pass, "Lebesgue max rel error " + fmt("%.1e", worst) + " (< 1e-4), Cantor exponent " + fmt("%.4f", slope) +
                    " in [0.5, 0.75]"};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome(double&)>>> criteria = {
      {"constant-drift oracle", criterion1},   {"OU oracle", criterion2},
      {"moment bound", criterion3},            {"Laplace bound", criterion4},
      {"Phi and m_delta identities", criterion5}, {"convolution lemma stability", criterion6},
      {"Varadhan limit", criterion7},          {"exponential-equivalence trend", criterion8},
      {"ball-probability lower bound", criterion9}, {"Kato machinery", criterion10}};
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    double secs = 0.0;
    Outcome o;
    try {
      o = criteria[i].second(secs);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s  %2zu  %-30s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str(),
                secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
