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
#include "katolab/measures.hpp"

#include <cmath>

namespace katolab {

using nlohmann::json;

namespace {

Point p3(double a, double b, double c) { return (Point(3) << a, b, c).finished(); }
Point e1() { return p3(1, 0, 0); }
Point origin() { return Point::Zero(3); }

json pj(const Point& p) { return point_json(p); }

json config(const std::string& kind, json parameters, std::uint64_t seed, const std::string& output) {
  return json{{"schema_version", kSchemaVersion},
              {"experiment", kind},
              {"parameters", std::move(parameters)},
              {"seed", seed},
              {"output", output}};
}

// The drift b = e1 * exp(-|x|^2 / (2 0.5^2)) used throughout the bump experiments.
DriftMeasure bump_drift(double amplitude = 1.0) {
  return DriftMeasure::gaussian_bump(amplitude, 0.5, origin(), e1());
}
SignedMeasure bump_functional() { return SignedMeasure::gaussian_bump(1.0, 0.5, origin()); }

json centre_kato() { return json{{"grid", json::array({pj(origin())})}}; }

std::vector<Preset> build() {
  std::vector<Preset> out;

  out.push_back({"constant-drift-oracle",
                 "parametrix series for b = (1,0,0) in d = 3 against the translated Gaussian, with "
                 "per-term Taylor parts",
                 1,
                 config("series",
                        {{"drift", DriftMeasure::constant(e1()).to_json()},
                         {"series", {{"policy", "flag"}, {"max_terms", 8}, {"kato", centre_kato()}}},
                         {"tol", 1e-3},
                         {"max_rel_error", 1e-2},
                         {"points", json::array({{{"t", 0.5}, {"x", pj(origin())}, {"y", pj(p3(1, 1, 0))}}})},
                         {"reference", {{"kind", "constant"}, {"c", pj(e1())}, {"taylor_check", 3}}}},
                        1, "constant-drift-oracle")});

  json ou_points = json::array();
  for (auto [x, y] : {std::pair{origin(), p3(0.5, 0, 0)}, std::pair{p3(1, 0, 0), origin()},
                      std::pair{p3(0.5, 0.5, 0), p3(-0.5, 0.3, 0.2)}, std::pair{p3(2, 0, 0), p3(2.2, 0.1, 0)},
                      std::pair{p3(-1, 1, 0), p3(-0.6, 0.6, 0.3)}})
    ou_points.push_back({{"t", 0.25}, {"x", pj(x)}, {"y", pj(y)}});
  out.push_back({"ou-oracle",
                 "parametrix series for b(x) = -0.4 x in d = 3 against the exact Ornstein-Uhlenbeck "
                 "density at five probe points",
                 2,
                 config("series",
                        {{"drift", DriftMeasure::ornstein_uhlenbeck(3, 0.4, 6.0).to_json()},
                         {"series", {{"policy", "flag"}}},
                         {"tol", 1e-3},
                         {"max_rel_error", 3e-2},
                         {"points", ou_points},
                         {"reference", {{"kind", "ou"}, {"gamma", 0.4}}}},
                        1, "ou-oracle")});

  out.push_back({"moment-bound-bump",
                 "E_x A_t^n for the bump functional under Brownian motion against n! alpha_n "
                 "(sqrt(t) Lambda_t)^n, n = 1, 2, 3",
                 3,
                 config("moments",
                        {{"d", 3},
                         {"functional", bump_functional().to_json()},
                         {"sde", {{"step", 5e-5}, {"paths", 100000}}},
                         {"x", pj(origin())},
                         {"t", {0.1, 0.2}},
                         {"powers", {1, 2, 3}},
                         {"oracle", true},
                         {"kato", centre_kato()}},
                        11, "moment-bound-bump")});

  out.push_back({"laplace-bound-bump",
                 "E_x exp(lambda A_t) for the bump functional against 2 exp(2 lambda^2 t Lambda_t^2)",
                 4,
                 config("moments",
                        {{"d", 3},
                         {"functional", bump_functional().to_json()},
                         {"sde", {{"step", 1e-3}, {"paths", 100000}}},
                         {"x", pj(origin())},
                         {"t", {0.1}},
                         {"powers", {1}},
                         {"lambdas", {0.5, 1.0, 2.0}},
                         {"kato", centre_kato()}},
                        12, "laplace-bound-bump")});

  out.push_back({"kernel-identities",
                 "Phi series against its majorant on [0, 5] and the closed form of m_delta",
                 5,
                 config("kernel-checks",
                        {{"phi", {{"z_max", 5.0}, {"points", 50}}},
                         {"m_delta", {{"deltas", {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}}, {"tolerance", 1e-8}}}},
                        1, "kernel-identities")});

  out.push_back({"lemma-ratio-bump",
                 "convolution lemma ratio for the bump drift at (a1, a2) = (0.5, 0.75) across small t",
                 6,
                 config("series",
                        {{"mode", "lemma-ratio"},
                         {"d", 3},
                         {"measure", bump_functional().to_json()},
                         {"a1", 0.5},
                         {"a2", 0.75},
                         {"t", {0.1, 0.05, 0.025}},
                         {"max_variation", 0.2}},
                        1, "lemma-ratio-bump")});

  const json var_grid = {0.2, 0.1, 0.05, 0.025, 0.0125};
  out.push_back({"varadhan-bump-d3",
                 "t log q(t, x, y) for the bump drift in d = 3 with |x - y| = 1, extrapolated to t = 0, "
                 "with the drift-free curve as a check",
                 7,
                 config("varadhan",
                        {{"drift", bump_drift().to_json()},
                         {"series",
                          {{"policy", "flag"}, {"max_terms", 10}, {"kato", centre_kato()},
                           {"quadrature", {{"budget", 3e6}}}}},
                         {"tol", 1e-3},
                         {"t_grid", var_grid},
                         {"pairs", json::array({{{"x", pj(-0.5 * e1())}, {"y", pj(0.5 * e1())}}})},
                         {"drift_free_check", true},
                         {"limit_window", 0.05}},
                        1, "varadhan-bump-d3")});

  out.push_back({"exp-equivalence-bump",
                 "eps log P(sup |A_{eps t}| > 0.5) along eps = 0.2, 0.1, 0.05 for a strong bump drift",
                 8,
                 config("ldp",
                        {{"mode", "equivalence"},
                         {"drift", bump_drift(12.0).to_json()},
                         {"sde", {{"step", 1e-3}, {"paths", 100000}}},
                         {"x", pj(origin())},
                         {"delta", 0.5},
                         {"eps_grid", {0.2, 0.1, 0.05}},
                         {"kato", centre_kato()}},
                        1, "exp-equivalence-bump")});

  json ball_cases = json::array();
  for (auto [y, eps, r] : {std::tuple{origin(), 0.3, 0.1}, {p3(0.3, 0, 0.1), 0.3, 0.1}, {p3(0.5, 0, 0), 0.3, 0.1},
                           {p3(0.2, 0.2, 0), 0.2, 0.05}, {p3(1, 0, 0), 0.5, 0.25}})
    ball_cases.push_back({{"x", pj(origin())}, {"y", pj(y)}, {"eps", eps}, {"r", r}});
  for (double r : {0.05, 0.1})
    ball_cases.push_back(
        {{"x", pj(origin())}, {"y", pj(p3(0.3, 0, 0.1))}, {"eps", 0.3}, {"r", r}, {"drift", bump_drift().to_json()}});
  out.push_back({"ball-lower-bound",
                 "P_x(|X_r - y| < eps) for Brownian motion against the Gaussian ball probability and for "
                 "the bump drift against the Gaussian-minus-tail lower bound",
                 9,
                 config("simulate",
                        {{"drift", DriftMeasure::zero(3).to_json()},
                         {"estimator", "ball"},
                         {"sde", {{"step", 1e-3}, {"paths", 40000}}},
                         {"cases", ball_cases},
                         {"kato", centre_kato()}},
                        1, "ball-lower-bound")});

  std::vector<double> cantor_radii;
  for (int k = 2; k <= 7; ++k) cantor_radii.push_back(std::pow(3.0, -k));
  out.push_back({"kato-lebesgue-cantor",
                 "N_t^alpha of Lebesgue measure in d = 3 against 2 (pi / alpha)^{3/2} sqrt(t), and the "
                 "Kato membership profile of a Cantor product measure",
                 10,
                 config("kato",
                        {{"d", 3},
                         {"items",
                          json::array({{{"name", "lebesgue"},
                                        {"measure", SignedMeasure::constant(3, 1.0).to_json()},
                                        {"t", {0.01, 0.05, 0.1, 0.5}},
                                        {"alpha", 1.0}},
                                       {{"name", "cantor"},
                                        {"measure", SignedMeasure::cantor_product(0, 1.0, origin(), 1.0).to_json()},
                                        {"t", {0.01, 0.1}},
                                        {"profile", {{"radii", cantor_radii}}}}})}},
                        1, "kato-lebesgue-cantor")});

  out.push_back({"kato-zero",
                 "N_t^alpha of the zero measure, a table of zeros",
                 0,
                 config("kato",
                        {{"d", 3},
                         {"items", json::array({{{"name", "zero"},
                                                 {"measure", SignedMeasure::zero(3).to_json()},
                                                 {"t", {0.1, 0.5, 1.0}}}})}},
                        1, "kato-zero")});

  out.push_back({"varadhan-drift-free",
                 "t log q for zero drift, the closed-form path",
                 0,
                 config("varadhan",
                        {{"drift", DriftMeasure::zero(3).to_json()},
                         {"t_grid", var_grid},
                         {"pairs", json::array({{{"x", pj(-0.5 * e1())}, {"y", pj(0.5 * e1())}},
                                                {{"x", pj(origin())}, {"y", pj(p3(0.3, 0.4, 0))}}})},
                         {"drift_free_check", true}},
                        1, "varadhan-drift-free")});

  out.push_back({"ldp-tube-line",
                 "eps log P(sup |X_{eps t} - f(t)| < 0.5) along the line from 0 to e1, bump drift",
                 0,
                 config("ldp",
                        {{"mode", "tube"},
                         {"drift", bump_drift().to_json()},
                         {"sde", {{"step", 1e-3}, {"paths", 100000}}},
                         {"x", pj(origin())},
                         {"path", PiecewiseLinearPath::line(origin(), e1()).to_json()},
                         {"rho", 0.5},
                         {"eps_grid", {0.4, 0.2, 0.1, 0.05}}},
                        1, "ldp-tube-line")});

  out.push_back({"mollification-coupling",
                 "sup |X^(n) - X^(n+1)| on one Brownian path set for a Cantor drift in d = 2",
                 0,
                 config("simulate",
                        {{"drift", DriftMeasure(2, {SignedMeasure::cantor_product(0, 1.0, (Point(2) << -0.5, -0.5).finished(), 1.0),
                                                    SignedMeasure::zero(2)})
                                       .to_json()},
                         {"estimator", "coupling"},
                         {"sde", {{"step", 1.0 / 256.0}, {"paths", 1000}, {"horizon", 0.25}, {"mollify_level", 1}}},
                         {"x", pj(Point::Zero(2))},
                         {"levels", {1, 2, 3}}},
                        1, "mollification-coupling")});
  return out;
}

}  // namespace

const std::vector<Preset>& presets() {
  static const std::vector<Preset> catalog = build();
  return catalog;
}

std::optional<Preset> find_preset(const std::string& name) {
  for (const auto& p : presets())
    if (p.name == name) return p;
  return std::nullopt;
}

}  // namespace katolab
