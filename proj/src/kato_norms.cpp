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

#include "katolab/kato_norms.hpp"

#include "katolab/csv.hpp"
#include "katolab/kernels.hpp"
#include "katolab/parallel.hpp"
#include "katolab/quadrature.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

namespace katolab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

GeometricOptions geometric(const KatoOptions& opt) {
  GeometricOptions g;
  g.rel_tol = opt.rel_tol;
  g.max_panels = opt.max_panels;
  g.nodes_per_panel = opt.nodes_per_panel;
  return g;
}

// sup over the grid of a per-point time integral (u = sqrt(s) variable).
template <typename PerPoint>
KatoNormResult grid_sup(const SignedMeasure& mu, const std::vector<Point>& grid,
                        PerPoint per_point) {
  std::vector<KatoNormResult> results(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) { results[i] = per_point(grid[i]); });
  KatoNormResult best;
  best.argmax = grid.empty() ? Point::Zero(mu.dimension()) : grid.front();
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    if (r.diverging && !best.diverging) {
      best = r;
      best.argmax = grid[i];
      continue;
    }
    if (best.diverging) continue;
    if (r.value > best.value) {
      best.value = r.value;
      best.argmax = grid[i];
    }
    best.error = std::max(best.error, r.error);
  }
  best.outside_theory = mu.dimension() < 3;
  return best;
}

void check_nonnegative(const SignedMeasure& mu, const char* what) {
  if (!mu.is_nonnegative())
    throw DomainError(std::string(what) + ": expects a nonnegative measure (pass |mu|)");
}

}  // namespace

std::vector<Point> default_sup_grid(const SignedMeasure& mu, double t, double alpha,
                                    int per_dim) {
  const double margin = 3.0 * std::sqrt(t / (2.0 * alpha));
  return mu.suggested_sup_grid(margin, per_dim);
}

KatoNormResult kato_norm_N_at(const SignedMeasure& mu, double t, double alpha, const Point& x,
                              const KatoOptions& opt) {
  if (!(t > 0.0)) throw DomainError("kato_norm_N: t must be positive");
  if (!(alpha > 0.0)) throw DomainError("kato_norm_N: alpha must be positive");
  const int d = mu.dimension();
  // s = u^2: int_0^t s^{-(d+1)/2} F(s) ds = 2 int_0^sqrt(t) u^{-d} F(u^2) du
  auto g = [&](double u) {
    const double s = u * u;
    return 2.0 * std::pow(u, -d) * mu.gaussian_integral(x, alpha / s, opt.integration);
  };
  const GeometricIntegral gi = integrate_geometric(g, std::sqrt(t), geometric(opt));
  KatoNormResult r;
  r.argmax = x;
  r.outside_theory = d < 3;
  if (gi.diverging) {
    r.value = kInf;
    r.diverging = true;
    return r;
  }
  r.value = gi.value;
  r.error = gi.error;
  return r;
}

KatoNormResult kato_norm_N(const SignedMeasure& mu, double t, double alpha,
                           const KatoOptions& opt) {
  check_nonnegative(mu, "kato_norm_N");
  if (!(t > 0.0)) throw DomainError("kato_norm_N: t must be positive");
  if (!(alpha > 0.0)) throw DomainError("kato_norm_N: alpha must be positive");
  const std::vector<Point> grid =
      opt.grid.empty() ? default_sup_grid(mu, t, alpha, opt.grid_per_dim) : opt.grid;
  return grid_sup(mu, grid,
                  [&](const Point& x) { return kato_norm_N_at(mu, t, alpha, x, opt); });
}

TransitionKernel TransitionKernel::envelope(double c4, double c5, double c6) {
  if (!(c4 > 0.0) || !(c6 > 0.0)) throw DomainError("envelope kernel: need C4 > 0, C6 > 0");
  TransitionKernel k;
  k.mode = Mode::Envelope;
  k.c4 = c4;
  k.c5 = c5;
  k.c6 = c6;
  return k;
}

TransitionKernel TransitionKernel::from_function(
    std::function<double(double, const Point&, const Point&)> q) {
  TransitionKernel k;
  k.mode = Mode::Custom;
  k.custom = std::move(q);
  return k;
}

KatoNormResult lambda_norm(const SignedMeasure& mu, double t, const TransitionKernel& kernel,
                           const KatoOptions& opt) {
  check_nonnegative(mu, "lambda_norm");
  if (!(t > 0.0)) throw DomainError("lambda_norm: t must be positive");
  const int d = mu.dimension();
  // s-weight s^{-1/2} times the spatial integral, in the u = sqrt(s) variable
  std::function<double(double, const Point&)> spatial;
  double alpha_grid = 0.5;
  switch (kernel.mode) {
    case TransitionKernel::Mode::ExactGaussian:
      spatial = [&](double s, const Point& x) {
        return std::pow(2.0 * std::numbers::pi * s, -0.5 * d) *
               mu.gaussian_integral(x, 0.5 / s, opt.integration);
      };
      break;
    case TransitionKernel::Mode::Envelope:
      alpha_grid = kernel.c6;
      spatial = [&](double s, const Point& x) {
        return kernel.c4 * std::exp(kernel.c5 * s) * std::pow(s, -0.5 * d) *
               mu.gaussian_integral(x, kernel.c6 / s, opt.integration);
      };
      break;
    case TransitionKernel::Mode::Custom:
      if (!kernel.custom) throw DomainError("lambda_norm: custom kernel not set");
      spatial = [&](double s, const Point& x) {
        const Box window = Box::cube(x, kernel.custom_radius * std::sqrt(s));
        try {
          return mu.integrate([&](const Point& y) { return kernel.custom(s, x, y); }, window,
                              opt.integration);
        } catch (const std::exception& e) {
          std::ostringstream msg;
          msg << "lambda_norm: kernel evaluation failed at s=" << s << ": " << e.what();
          throw std::runtime_error(msg.str());
        }
      };
      break;
  }
  const std::vector<Point> grid =
      opt.grid.empty() ? default_sup_grid(mu, t, alpha_grid, opt.grid_per_dim) : opt.grid;
  return grid_sup(mu, grid, [&](const Point& x) {
    // int_0^t s^{-1/2} S(s) ds = 2 int_0^sqrt(t) S(u^2) du
    auto g = [&](double u) { return 2.0 * spatial(u * u, x); };
    const GeometricIntegral gi = integrate_geometric(g, std::sqrt(t), geometric(opt));
    KatoNormResult r;
    r.argmax = x;
    if (gi.diverging) {
      r.value = kInf;
      r.diverging = true;
    } else {
      r.value = gi.value;
      r.error = gi.error;
    }
    return r;
  });
}

void KatoProfile::write_csv(std::ostream& out) const {
  CsvWriter csv(out, {"r", "value"});
  for (std::size_t i = 0; i < radii.size(); ++i) csv.row(radii[i], values[i]);
}

KatoProfile kato_membership_profile(const SignedMeasure& mu, const std::vector<double>& radii,
                                    const ProfileOptions& opt) {
  check_nonnegative(mu, "kato_membership_profile");
  if (radii.empty()) throw DomainError("kato_membership_profile: empty radius grid");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0.0)) throw DomainError("kato_membership_profile: radii must be positive");
    if (i > 0 && !(radii[i] < radii[i - 1]))
      throw DomainError("kato_membership_profile: radii must be decreasing");
  }
  const std::vector<Point> grid =
      opt.grid.empty() ? mu.suggested_sup_grid(radii.front(), opt.grid_per_dim) : opt.grid;
  KatoProfile prof;
  prof.radii = radii;
  prof.values.assign(radii.size(), 0.0);
  prof.outside_theory = mu.dimension() < 3;
  std::vector<double> cell(radii.size() * grid.size(), 0.0);
  parallel_for(cell.size(), [&](std::size_t k) {
    const std::size_t i = k / grid.size();
    const std::size_t j = k % grid.size();
    cell[k] = mu.kato_ball_integral(grid[j], radii[i], opt.integration);
  });
  for (std::size_t i = 0; i < radii.size(); ++i)
    for (std::size_t j = 0; j < grid.size(); ++j)
      prof.values[i] = std::max(prof.values[i], cell[i * grid.size() + j]);

  bool finite = true;
  bool monotone = true;
  for (std::size_t i = 0; i < radii.size(); ++i) {
    finite = finite && std::isfinite(prof.values[i]);
    if (i > 0)
      monotone = monotone &&
                 prof.values[i] <= prof.values[i - 1] * (1.0 + opt.monotone_tol) + 1e-300;
  }
  prof.consistent = finite && monotone &&
                    prof.values.back() <= opt.threshold * prof.values.front();

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(prof.values[i] > 0.0) || !std::isfinite(prof.values[i])) continue;
    const double lx = std::log(radii[i]), ly = std::log(prof.values[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++n;
  }
  if (n >= 2) prof.fitted_exponent = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return prof;
}

}  // namespace katolab
