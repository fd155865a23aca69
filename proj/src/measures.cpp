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

#include "katolab/measures.hpp"

#include "katolab/kernels.hpp"
#include "katolab/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <set>
#include <variant>

namespace katolab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using json = nlohmann::json;

}  // namespace

// ---------------------------------------------------------------------------
// Box

Box Box::unbounded(int d) {
  return Box{Point::Constant(d, -kInf), Point::Constant(d, kInf)};
}

Box Box::cube(const Point& center, double half_width) {
  return Box{(center.array() - half_width).matrix(), (center.array() + half_width).matrix()};
}

bool Box::bounded() const { return lo.allFinite() && hi.allFinite(); }

bool Box::empty() const { return ((hi - lo).array() <= 0.0).any(); }

Box Box::intersect(const Box& other) const {
  return Box{lo.cwiseMax(other.lo), hi.cwiseMin(other.hi)};
}

Box Box::expanded(double margin) const {
  return Box{(lo.array() - margin).matrix(), (hi.array() + margin).matrix()};
}

bool Box::contains(const Box& inner) const {
  return (inner.lo.array() >= lo.array()).all() && (inner.hi.array() <= hi.array()).all();
}

bool Box::contains(const Point& p) const {
  return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
}

double Box::volume() const {
  if (empty()) return 0.0;
  return (hi - lo).prod();
}

// ---------------------------------------------------------------------------
// Representations

namespace {

struct DensityRep {
  ScalarFunction f;
  Box support;
  Box effective;
  std::optional<double> sup_abs;
  json description;
  bool nonnegative = false;
  bool zero = false;
};

// weight * (axis measure) x (Lebesgue on the remaining coordinates), on a cube.
struct AxisRep {
  enum class Type { Cantor, Dirac };
  Type type = Type::Cantor;
  int axis = 0;
  double weight = 1.0;
  Point lo;
  double side = 1.0;
  double offset = 0.0;

  Box box() const { return Box{lo, (lo.array() + side).matrix()}; }
};

struct SumRep {
  std::vector<std::pair<double, SignedMeasure>> terms;
  bool tv_exact = true;
};

}  // namespace

struct SignedMeasure::Impl {
  int d = 1;
  std::variant<DensityRep, AxisRep, SumRep> rep;
};

namespace {

// Tensor Gauss-Legendre over a bounded box with the given panels per axis.
TensorRule box_rule(const Box& region, int panels, int nodes) {
  std::vector<QuadRule> axes;
  axes.reserve(region.dimension());
  for (int k = 0; k < region.dimension(); ++k)
    axes.push_back(composite_legendre(region.lo(k), region.hi(k), panels, nodes));
  return TensorRule(std::move(axes));
}

// Integral of exp(-prec (x - y)^2) dy over [a, b], guarded against cancellation.
double gaussian_segment(double x, double prec, double a, double b) {
  if (b <= a) return 0.0;
  const double s = std::sqrt(prec);
  const double lo = s * (a - x);
  const double hi = s * (b - x);
  double diff;
  if (lo > 0.0) {
    diff = std::erfc(lo) - std::erfc(hi);
  } else if (hi < 0.0) {
    diff = std::erfc(-hi) - std::erfc(-lo);
  } else {
    diff = std::erf(hi) - std::erf(lo);
  }
  return 0.5 * std::sqrt(std::numbers::pi / prec) * diff;
}

// Middle-thirds Cantor distribution function on [0, 1].
double cantor_cdf(double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  double result = 0.0;
  double scale = 0.5;
  for (int i = 0; i < 60; ++i) {
    const double u3 = 3.0 * u;
    if (u3 < 1.0) {
      u = u3;
    } else if (u3 <= 2.0) {
      return result + scale;
    } else {
      result += scale;
      u = u3 - 2.0;
    }
    scale *= 0.5;
  }
  return result;
}

// Depth-first walk of the Cantor cells of [lo, lo + side] (physical units).
// keep(a, b) prunes cells; split(a, b, depth) asks for refinement; leaf(y, m)
// receives a two-point rule per unrefined cell, matching the mean and
// variance (width^2/8) of the Cantor measure on the cell.
template <typename Keep, typename Split, typename Leaf>
void cantor_walk(double lo, double side, int max_depth, Keep keep, Split split, Leaf leaf) {
  struct Cell {
    double a;
    double w;
    double m;
    int depth;
  };
  std::vector<Cell> stack;
  stack.push_back({lo, side, 1.0, 0});
  const double offset = 1.0 / (2.0 * std::numbers::sqrt2);
  while (!stack.empty()) {
    const Cell c = stack.back();
    stack.pop_back();
    if (!keep(c.a, c.a + c.w)) continue;
    if (c.depth < max_depth && split(c.a, c.a + c.w, c.depth)) {
      const double w3 = c.w / 3.0;
      stack.push_back({c.a + 2.0 * w3, w3, 0.5 * c.m, c.depth + 1});
      stack.push_back({c.a, w3, 0.5 * c.m, c.depth + 1});
      continue;
    }
    const double mid = c.a + 0.5 * c.w;
    leaf(mid - offset * c.w, 0.5 * c.m, c.w);
    leaf(mid + offset * c.w, 0.5 * c.m, c.w);
  }
}

// Other-coordinate box of an axis representation (d-1 dimensional).
Box other_box(const AxisRep& r, const Box& full) {
  const int d = full.dimension();
  Box out{Point(d - 1), Point(d - 1)};
  for (int k = 0, j = 0; k < d; ++k) {
    if (k == r.axis) continue;
    out.lo(j) = full.lo(k);
    out.hi(j) = full.hi(k);
    ++j;
  }
  return out;
}

Point drop_axis(const Point& x, int axis) {
  Point out(x.size() - 1);
  for (int k = 0, j = 0; k < x.size(); ++k) {
    if (k == axis) continue;
    out(j++) = x(k);
  }
  return out;
}

Point insert_axis(const Point& others, int axis, double value) {
  Point out(others.size() + 1);
  for (int k = 0, j = 0; k < out.size(); ++k) out(k) = (k == axis) ? value : others(j++);
  return out;
}

// Integral of |u|^{-(d-1)}-type kernel over the (d-1)-dim slice of the ball of
// radius r at axial distance h > 0, clipped to the box of the other
// coordinates (given relative to x). Closed forms for the unclipped case:
// sigma_{d-2} * int_0^{atan(R/h)} sin^{d-2}(th)/cos(th) dth.
double slice_kernel(int d, double h, double r, const Box& rel_box) {
  if (h >= r) return 0.0;
  if (d == 1) return 1.0;
  const double big_r = std::sqrt(std::max(0.0, r * r - h * h));
  if (d == 2) {
    const double a = std::max(-big_r, rel_box.lo(0));
    const double b = std::min(big_r, rel_box.hi(0));
    if (b <= a) return 0.0;
    return std::asinh(b / h) - std::asinh(a / h);
  }
  const bool inside = (rel_box.lo.array() <= -big_r).all() && (rel_box.hi.array() >= big_r).all();
  if (d == 3 && !inside) {
    // polar clipping of the disc by the rectangle
    const int m = 512;
    double sum = 0.0;
    for (int i = 0; i < m; ++i) {
      const double th = (i + 0.5) * 2.0 * std::numbers::pi / m;
      const double c = std::cos(th), s = std::sin(th);
      double exit = big_r;
      if (c > 0) exit = std::min(exit, rel_box.hi(0) / c);
      if (c < 0) exit = std::min(exit, rel_box.lo(0) / c);
      if (s > 0) exit = std::min(exit, rel_box.hi(1) / s);
      if (s < 0) exit = std::min(exit, rel_box.lo(1) / s);
      exit = std::max(0.0, exit);
      sum += 0.5 * std::log1p(exit * exit / (h * h));
    }
    return sum * 2.0 * std::numbers::pi / m;
  }
  if (!inside) throw DomainError("kato_ball_integral: ball leaves the measure's cube (d >= 4)");
  const double theta = std::atan2(big_r, h);
  const double sn = std::sin(theta), cs = std::cos(theta);
  const int m = d - 2;
  // I_m = int_0^theta sin^m / cos
  double i_even = std::log((1.0 + sn) / cs);  // I_0
  double i_odd = -std::log(cs);               // I_1
  double value = (m % 2 == 0) ? i_even : i_odd;
  for (int k = (m % 2 == 0) ? 2 : 3; k <= m; k += 2) {
    value -= std::pow(sn, k - 1) / (k - 1);
  }
  return sphere_area(d - 1) * value;
}

// Unit-sphere rule in R^d for polar integration.
struct SphereRule {
  std::vector<Point> dirs;
  std::vector<double> weights;
};

const SphereRule& sphere_rule(int d) {
  static std::map<int, SphereRule> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(d);
  if (it != cache.end()) return it->second;
  SphereRule rule;
  if (d == 1) {
    rule.dirs = {Point::Constant(1, 1.0), Point::Constant(1, -1.0)};
    rule.weights = {1.0, 1.0};
  } else if (d == 2) {
    const int m = 96;
    for (int i = 0; i < m; ++i) {
      const double th = 2.0 * std::numbers::pi * i / m;
      Point p(2);
      p << std::cos(th), std::sin(th);
      rule.dirs.push_back(p);
      rule.weights.push_back(2.0 * std::numbers::pi / m);
    }
  } else if (d == 3) {
    const QuadRule& gl = gauss_legendre(20);
    const int m = 40;
    for (std::size_t i = 0; i < gl.size(); ++i) {
      const double ct = gl.nodes[i];
      const double st = std::sqrt(1.0 - ct * ct);
      for (int j = 0; j < m; ++j) {
        const double ph = 2.0 * std::numbers::pi * (j + 0.5) / m;
        Point p(3);
        p << st * std::cos(ph), st * std::sin(ph), ct;
        rule.dirs.push_back(p);
        rule.weights.push_back(gl.weights[i] * 2.0 * std::numbers::pi / m);
      }
    }
  } else {
    Rng rng = make_stream(0x5eed, static_cast<std::uint64_t>(d));
    NormalSampler normal;
    const int m = 8192;
    for (int i = 0; i < m; ++i) {
      Point p(d);
      for (int k = 0; k < d; ++k) p(k) = normal(rng);
      rule.dirs.push_back(p.normalized());
      rule.weights.push_back(sphere_area(d) / m);
    }
  }
  return cache.emplace(d, std::move(rule)).first->second;
}


double number_at(const json& j, const char* key, const char* what) {
  if (!j.contains(key) || !j.at(key).is_number())
    throw SchemaError(std::string(what) + ": missing numeric '" + key + "'");
  return j.at(key).get<double>();
}

int integer_at(const json& j, const char* key, const char* what) {
  if (!j.contains(key) || !j.at(key).is_number_integer())
    throw SchemaError(std::string(what) + ": missing integer '" + key + "'");
  return j.at(key).get<int>();
}

}  // namespace

json point_json(const Point& p) {
  json a = json::array();
  for (int k = 0; k < p.size(); ++k) a.push_back(p(k));
  return a;
}

Point point_from_json(const json& j, int d, const char* what) {
  if (!j.is_array() || static_cast<int>(j.size()) != d)
    throw SchemaError(std::string(what) + ": expected an array of " + std::to_string(d) +
                      " numbers");
  Point p(d);
  for (int k = 0; k < d; ++k) {
    if (!j[k].is_number()) throw SchemaError(std::string(what) + ": non-numeric entry");
    p(k) = j[k].get<double>();
  }
  return p;
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const char* what) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw SchemaError(std::string(what) + ": unknown key '" + it.key() + "'");
  }
}

// ---------------------------------------------------------------------------
// SignedMeasure construction

SignedMeasure::SignedMeasure() : SignedMeasure(zero(1)) {}

SignedMeasure::SignedMeasure(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

SignedMeasure SignedMeasure::density(int d, ScalarFunction f, Box support, Box effective,
                                     std::optional<double> sup_abs, json description) {
  check_dimension(d);
  auto impl = std::make_shared<Impl>();
  impl->d = d;
  impl->rep = DensityRep{std::move(f), std::move(support), std::move(effective), sup_abs,
                         std::move(description), false, false};
  return SignedMeasure(std::move(impl));
}

SignedMeasure SignedMeasure::zero(int d) {
  check_dimension(d);
  auto impl = std::make_shared<Impl>();
  impl->d = d;
  impl->rep = DensityRep{[](const Point&) { return 0.0; },
                         Box::unbounded(d),
                         Box{Point::Zero(d), Point::Zero(d)},
                         0.0,
                         json{{"kind", "density"}, {"profile", "zero"}},
                         true,
                         true};
  return SignedMeasure(std::move(impl));
}

SignedMeasure SignedMeasure::constant(int d, double value) {
  if (value == 0.0) return zero(d);
  auto impl = std::make_shared<Impl>();
  impl->d = d;
  check_dimension(d);
  impl->rep = DensityRep{[value](const Point&) { return value; },
                         Box::unbounded(d),
                         Box::unbounded(d),
                         std::abs(value),
                         json{{"kind", "density"}, {"profile", "constant"}, {"value", value}},
                         value >= 0.0,
                         false};
  return SignedMeasure(std::move(impl));
}

SignedMeasure SignedMeasure::gaussian_bump(double amplitude, double width, const Point& center) {
  const int d = static_cast<int>(center.size());
  check_dimension(d);
  if (!(width > 0.0)) throw DomainError("gaussian_bump: width must be positive");
  if (amplitude == 0.0) return zero(d);
  const double inv = 1.0 / (2.0 * width * width);
  auto impl = std::make_shared<Impl>();
  impl->d = d;
  impl->rep = DensityRep{
      [amplitude, inv, center](const Point& y) {
        return amplitude * std::exp(-inv * (y - center).squaredNorm());
      },
      Box::unbounded(d),
      Box::cube(center, 4.0 * width),
      std::abs(amplitude),
      json{{"kind", "density"},
           {"profile", "gaussian_bump"},
           {"amplitude", amplitude},
           {"width", width},
           {"center", point_json(center)}},
      amplitude >= 0.0,
      false};
  return SignedMeasure(std::move(impl));
}

SignedMeasure SignedMeasure::linear(int d, int coordinate, double coefficient, double clip) {
  check_dimension(d);
  if (coordinate < 0 || coordinate >= d) throw DomainError("linear: coordinate out of range");
  if (!(clip > 0.0)) throw DomainError("linear: clip must be positive");
  if (coefficient == 0.0) return zero(d);
  auto impl = std::make_shared<Impl>();
  impl->d = d;
  impl->rep = DensityRep{
      [coordinate, coefficient, clip](const Point& y) {
        return coefficient * std::clamp(y(coordinate), -clip, clip);
      },
      Box::unbounded(d),
      Box::cube(Point::Zero(d), clip),
      std::abs(coefficient) * clip,
      json{{"kind", "density"},
           {"profile", "linear"},
           {"coordinate", coordinate},
           {"coefficient", coefficient},
           {"clip", clip}},
      false,
      false};
  return SignedMeasure(std::move(impl));
}

SignedMeasure SignedMeasure::radial_power(double amplitude, double exponent, double radius,
                                          const Point& center) {
  const int d = static_cast<int>(center.size());
  check_dimension(d);
  if (!(radius > 0.0)) throw DomainError("radial_power: radius must be positive");
  if (!(exponent >= 0.0 && exponent < d))
    throw DomainError("radial_power: exponent must lie in [0, d) for local integrability");
  auto impl = std::make_shared<Impl>();
  impl->d = d;
  impl->rep = DensityRep{
      [amplitude, exponent, radius, center](const Point& y) {
        const double r = (y - center).norm();
        if (r > radius) return 0.0;
        if (r == 0.0) return exponent > 0.0 ? kInf : amplitude;
        return amplitude * std::pow(r, -exponent);
      },
      Box::cube(center, radius),
      Box::cube(center, radius),
      exponent > 0.0 ? std::optional<double>{} : std::optional<double>{std::abs(amplitude)},
      json{{"kind", "density"},
           {"profile", "radial_power"},
           {"amplitude", amplitude},
           {"exponent", exponent},
           {"radius", radius},
           {"center", point_json(center)}},
      amplitude >= 0.0,
      amplitude == 0.0};
  return SignedMeasure(std::move(impl));
}

SignedMeasure SignedMeasure::cantor_product(int axis, double weight, const Point& lo,
                                            double side) {
  const int d = static_cast<int>(lo.size());
  check_dimension(d);
  if (axis < 0 || axis >= d) throw DomainError("cantor_product: axis out of range");
  if (!(side > 0.0)) throw DomainError("cantor_product: side must be positive");
  auto impl = std::make_shared<Impl>();
  impl->d = d;
  AxisRep r;
  r.type = AxisRep::Type::Cantor;
  r.axis = axis;
  r.weight = weight;
  r.lo = lo;
  r.side = side;
  impl->rep = r;
  return SignedMeasure(std::move(impl));
}

SignedMeasure SignedMeasure::hyperplane(int axis, double offset, double weight, const Point& lo,
                                        double side) {
  const int d = static_cast<int>(lo.size());
  check_dimension(d);
  if (axis < 0 || axis >= d) throw DomainError("hyperplane: axis out of range");
  if (!(side > 0.0)) throw DomainError("hyperplane: side must be positive");
  auto impl = std::make_shared<Impl>();
  impl->d = d;
  AxisRep r;
  r.type = AxisRep::Type::Dirac;
  r.axis = axis;
  r.weight = weight;
  r.lo = lo;
  r.side = side;
  r.offset = offset;
  impl->rep = r;
  return SignedMeasure(std::move(impl));
}

SignedMeasure SignedMeasure::weighted_sum(std::vector<std::pair<double, SignedMeasure>> terms) {
  if (terms.empty()) throw DomainError("weighted_sum: at least one term required");
  const int d = terms.front().second.dimension();
  for (const auto& t : terms)
    if (t.second.dimension() != d) throw DomainError("weighted_sum: mixed dimensions");
  auto impl = std::make_shared<Impl>();
  impl->d = d;
  impl->rep = SumRep{std::move(terms), true};
  return SignedMeasure(std::move(impl));
}

int SignedMeasure::dimension() const { return impl_->d; }

SignedMeasure::Kind SignedMeasure::kind() const {
  if (std::holds_alternative<DensityRep>(impl_->rep)) return Kind::Density;
  if (const auto* a = std::get_if<AxisRep>(&impl_->rep))
    return a->type == AxisRep::Type::Cantor ? Kind::CantorProduct : Kind::Hyperplane;
  return Kind::WeightedSum;
}

bool SignedMeasure::has_density() const {
  if (std::holds_alternative<DensityRep>(impl_->rep)) return true;
  if (const auto* s = std::get_if<SumRep>(&impl_->rep)) {
    for (const auto& t : s->terms)
      if (!t.second.has_density()) return false;
    return true;
  }
  return false;
}

double SignedMeasure::density_at(const Point& y) const {
  if (const auto* r = std::get_if<DensityRep>(&impl_->rep)) return r->zero ? 0.0 : r->f(y);
  if (const auto* s = std::get_if<SumRep>(&impl_->rep)) {
    double v = 0.0;
    for (const auto& t : s->terms) v += t.first * t.second.density_at(y);
    return v;
  }
  throw DomainError("density_at: measure has no pointwise density");
}

std::optional<double> SignedMeasure::sup_abs_density() const {
  if (const auto* r = std::get_if<DensityRep>(&impl_->rep)) return r->sup_abs;
  if (const auto* s = std::get_if<SumRep>(&impl_->rep)) {
    double v = 0.0;
    for (const auto& t : s->terms) {
      const auto b = t.second.sup_abs_density();
      if (!b) return std::nullopt;
      v += std::abs(t.first) * *b;
    }
    return v;
  }
  return std::nullopt;
}

Box SignedMeasure::effective_box() const {
  if (const auto* r = std::get_if<DensityRep>(&impl_->rep)) return r->effective;
  if (const auto* a = std::get_if<AxisRep>(&impl_->rep)) {
    Box b = a->box();
    if (a->type == AxisRep::Type::Dirac) {
      b.lo(a->axis) = a->offset;
      b.hi(a->axis) = a->offset;
    }
    return b;
  }
  const auto& s = std::get<SumRep>(impl_->rep);
  Box out = s.terms.front().second.effective_box();
  for (const auto& t : s.terms) {
    const Box b = t.second.effective_box();
    out.lo = out.lo.cwiseMin(b.lo);
    out.hi = out.hi.cwiseMax(b.hi);
  }
  return out;
}

bool SignedMeasure::tv_is_exact() const {
  if (const auto* s = std::get_if<SumRep>(&impl_->rep)) return s->tv_exact;
  return true;
}

bool SignedMeasure::is_nonnegative() const {
  if (const auto* r = std::get_if<DensityRep>(&impl_->rep)) return r->nonnegative;
  if (const auto* a = std::get_if<AxisRep>(&impl_->rep)) return a->weight >= 0.0;
  const auto& s = std::get<SumRep>(impl_->rep);
  for (const auto& t : s.terms)
    if (t.first < 0.0 || !t.second.is_nonnegative()) return false;
  return true;
}

SignedMeasure SignedMeasure::abs() const {
  if (is_nonnegative()) return *this;
  const int d = impl_->d;
  if (const auto* r = std::get_if<DensityRep>(&impl_->rep)) {
    auto f = r->f;
    SignedMeasure out = density(
        d, [f](const Point& y) { return std::abs(f(y)); }, r->support, r->effective, r->sup_abs,
        json{{"kind", "density"}, {"profile", "abs"}, {"of", r->description}});
    auto impl = std::make_shared<Impl>(*out.impl_);
    std::get<DensityRep>(impl->rep).nonnegative = true;
    return SignedMeasure(std::move(impl));
  }
  if (const auto* a = std::get_if<AxisRep>(&impl_->rep)) {
    auto impl = std::make_shared<Impl>(*impl_);
    std::get<AxisRep>(impl->rep).weight = std::abs(a->weight);
    return SignedMeasure(std::move(impl));
  }
  const auto& s = std::get<SumRep>(impl_->rep);
  if (has_density()) {
    SignedMeasure self = *this;
    Box support = Box::unbounded(d);
    bool all_bounded = true;
    Box bounding = s.terms.front().second.effective_box();
    for (const auto& t : s.terms) {
      const auto& rep = std::get_if<DensityRep>(&t.second.impl_->rep);
      if (rep && !rep->support.bounded()) all_bounded = false;
      const Box b = t.second.effective_box();
      bounding.lo = bounding.lo.cwiseMin(b.lo);
      bounding.hi = bounding.hi.cwiseMax(b.hi);
    }
    if (all_bounded) support = bounding;
    SignedMeasure out = density(
        d, [self](const Point& y) { return std::abs(self.density_at(y)); }, support, bounding,
        sup_abs_density(), json{{"kind", "density"}, {"profile", "abs"}, {"of", to_json()}});
    auto impl = std::make_shared<Impl>(*out.impl_);
    std::get<DensityRep>(impl->rep).nonnegative = true;
    return SignedMeasure(std::move(impl));
  }
  std::vector<std::pair<double, SignedMeasure>> terms;
  for (const auto& t : s.terms) terms.emplace_back(std::abs(t.first), t.second.abs());
  auto impl = std::make_shared<Impl>();
  impl->d = d;
  impl->rep = SumRep{std::move(terms), false};
  return SignedMeasure(std::move(impl));
}

// ---------------------------------------------------------------------------
// Integration

double SignedMeasure::integrate(const ScalarFunction& g, const Box& window,
                                const IntegrationOptions& opt) const {
  const int d = impl_->d;
  if (const auto* r = std::get_if<DensityRep>(&impl_->rep)) {
    if (r->zero) return 0.0;
    const Box region = r->support.intersect(window);
    if (region.empty()) return 0.0;
    if (!region.bounded()) throw DomainError("integrate: unbounded integration region");
    const TensorRule rule = box_rule(region, opt.max_panels, opt.nodes_per_panel);
    const auto& f = r->f;
    return rule.integrate([&](const Point& y) { return f(y) * g(y); });
  }
  if (const auto* a = std::get_if<AxisRep>(&impl_->rep)) {
    const Box full = a->box().intersect(window);
    if (full.empty()) return 0.0;
    const Box others = other_box(*a, full);
    const double lo_a = full.lo(a->axis), hi_a = full.hi(a->axis);
    auto slice = [&](double ya) {
      if (d == 1) return g(Point::Constant(1, ya));
      const TensorRule rule = box_rule(others, opt.max_panels, opt.nodes_per_panel);
      return rule.integrate([&](const Point& u) { return g(insert_axis(u, a->axis, ya)); });
    };
    if (a->type == AxisRep::Type::Dirac) {
      if (a->offset < lo_a || a->offset > hi_a) return 0.0;
      return a->weight * slice(a->offset);
    }
    double sum = 0.0;
    const double min_w = std::max((hi_a - lo_a) / 64.0, a->side * std::pow(3.0, -opt.max_cantor_depth));
    cantor_walk(
        a->lo(a->axis), a->side, opt.max_cantor_depth,
        [&](double ca, double cb) { return cb >= lo_a && ca <= hi_a; },
        [&](double ca, double cb, int) { return cb - ca > min_w; },
        [&](double y, double m, double) {
          if (y >= lo_a && y <= hi_a) sum += m * slice(y);
        });
    return a->weight * sum;
  }
  const auto& s = std::get<SumRep>(impl_->rep);
  double sum = 0.0;
  for (const auto& t : s.terms) sum += t.first * t.second.integrate(g, window, opt);
  return sum;
}

double SignedMeasure::gaussian_integral(const Point& x, double precision,
                                        const IntegrationOptions& opt) const {
  const int d = impl_->d;
  if (!(precision > 0.0)) throw DomainError("gaussian_integral: precision must be positive");
  const double sigma = 1.0 / std::sqrt(2.0 * precision);
  if (const auto* r = std::get_if<DensityRep>(&impl_->rep)) {
    if (r->zero) return 0.0;
    const Box window = Box::cube(x, opt.window_sigmas * sigma);
    if (r->support.contains(window)) {
      // exp(-prec|x-y|^2) = (pi/prec)^{d/2} N(y; x, sigma^2 I)
      const QuadRule& gh = gauss_hermite(opt.hermite_nodes);
      std::vector<QuadRule> axes(d);
      for (int k = 0; k < d; ++k) {
        axes[k] = gh;
        for (auto& node : axes[k].nodes) node = x(k) + sigma * node;
      }
      const TensorRule rule(std::move(axes));
      return std::pow(std::numbers::pi / precision, 0.5 * d) * rule.integrate(r->f);
    }
    const Box region = r->support.intersect(window);
    if (region.empty()) return 0.0;
    std::vector<QuadRule> axes;
    for (int k = 0; k < d; ++k) {
      const double len = region.hi(k) - region.lo(k);
      const int panels = std::clamp(static_cast<int>(std::ceil(len / (2.0 * sigma))), 1,
                                    opt.max_panels);
      axes.push_back(composite_legendre(region.lo(k), region.hi(k), panels, opt.nodes_per_panel));
    }
    const TensorRule rule(std::move(axes));
    const auto& f = r->f;
    return rule.integrate(
        [&](const Point& y) { return f(y) * std::exp(-precision * (x - y).squaredNorm()); });
  }
  if (const auto* a = std::get_if<AxisRep>(&impl_->rep)) {
    double other = 1.0;
    for (int k = 0; k < d; ++k) {
      if (k == a->axis) continue;
      other *= gaussian_segment(x(k), precision, a->lo(k), a->lo(k) + a->side);
    }
    if (other == 0.0) return 0.0;
    const double xa = x(a->axis);
    const double lo = a->lo(a->axis), hi = lo + a->side;
    if (a->type == AxisRep::Type::Dirac) {
      if (a->offset < lo || a->offset > hi) return 0.0;
      const double h = xa - a->offset;
      return a->weight * other * std::exp(-precision * h * h);
    }
    const double reach = opt.window_sigmas * sigma;
    const double min_w = sigma / 8.0;
    double sum = 0.0;
    cantor_walk(
        lo, a->side, opt.max_cantor_depth,
        [&](double ca, double cb) { return cb >= xa - reach && ca <= xa + reach; },
        [&](double ca, double cb, int) { return cb - ca > min_w; },
        [&](double y, double m, double) {
          const double h = xa - y;
          sum += m * std::exp(-precision * h * h);
        });
    return a->weight * other * sum;
  }
  const auto& s = std::get<SumRep>(impl_->rep);
  double sum = 0.0;
  for (const auto& t : s.terms) sum += t.first * t.second.gaussian_integral(x, precision, opt);
  return sum;
}

double SignedMeasure::kato_ball_integral(const Point& x, double r,
                                         const IntegrationOptions& opt) const {
  const int d = impl_->d;
  if (!(r > 0.0)) throw DomainError("kato_ball_integral: radius must be positive");
  if (const auto* rep = std::get_if<DensityRep>(&impl_->rep)) {
    if (rep->zero) return 0.0;
    // polar coordinates about x: the radial weight rho^{d-1} cancels the kernel
    const SphereRule& sphere = sphere_rule(d);
    const auto& f = rep->f;
    auto shell = [&](double rho) {
      double acc = 0.0;
      for (std::size_t i = 0; i < sphere.dirs.size(); ++i)
        acc += sphere.weights[i] * f(x + rho * sphere.dirs[i]);
      return acc;
    };
    GeometricOptions g;
    g.rel_tol = 1e-9;
    g.nodes_per_panel = 10;
    const GeometricIntegral res = integrate_geometric(shell, r, g);
    if (res.diverging) return kInf;
    return res.value;
  }
  if (const auto* a = std::get_if<AxisRep>(&impl_->rep)) {
    const Box box = a->box();
    const double xa = x(a->axis);
    Box rel{Point(std::max(d - 1, 1)), Point(std::max(d - 1, 1))};
    if (d > 1) {
      const Box ob = other_box(*a, box);
      const Point xo = drop_axis(x, a->axis);
      rel = Box{ob.lo - xo, ob.hi - xo};
    }
    const double lo = box.lo(a->axis), hi = box.hi(a->axis);
    if (a->type == AxisRep::Type::Dirac) {
      if (a->offset < lo || a->offset > hi) return 0.0;
      const double h = std::abs(xa - a->offset);
      if (h >= r) return 0.0;
      if (h == 0.0) return d == 1 ? a->weight : kInf;
      return a->weight * slice_kernel(d, h, r, rel);
    }
    double sum = 0.0;
    const double min_w = r / 32.0;
    cantor_walk(
        lo, a->side, opt.max_cantor_depth + 8,
        [&](double ca, double cb) { return cb >= xa - r && ca <= xa + r; },
        [&](double ca, double cb, int) {
          const double w = cb - ca;
          const double dist = std::max({ca - xa, xa - cb, 0.0});
          return w > min_w || dist < 2.0 * w;
        },
        [&](double y, double m, double w) {
          double h = std::abs(xa - y);
          if (h >= r) return;
          h = std::max(h, w / 8.0);
          sum += m * slice_kernel(d, h, r, rel);
        });
    return a->weight * sum;
  }
  const auto& s = std::get<SumRep>(impl_->rep);
  double sum = 0.0;
  for (const auto& t : s.terms) sum += t.first * t.second.kato_ball_integral(x, r, opt);
  return sum;
}

double SignedMeasure::mass_in(const Box& cube, const IntegrationOptions& opt) const {
  if (const auto* r = std::get_if<DensityRep>(&impl_->rep)) {
    if (r->zero) return 0.0;
    return integrate([](const Point&) { return 1.0; }, cube, opt);
  }
  if (const auto* a = std::get_if<AxisRep>(&impl_->rep)) {
    const Box region = a->box().intersect(cube);
    const int d = impl_->d;
    double flat = 1.0;
    for (int k = 0; k < d; ++k) {
      if (k == a->axis) continue;
      flat *= std::max(0.0, region.hi(k) - region.lo(k));
    }
    const double lo = region.lo(a->axis), hi = region.hi(a->axis);
    if (hi < lo) return 0.0;
    double axial;
    if (a->type == AxisRep::Type::Dirac) {
      axial = (a->offset >= lo && a->offset <= hi) ? 1.0 : 0.0;
    } else {
      const double base = a->lo(a->axis);
      axial = cantor_cdf((hi - base) / a->side) - cantor_cdf((lo - base) / a->side);
    }
    return a->weight * flat * axial;
  }
  const auto& s = std::get<SumRep>(impl_->rep);
  double sum = 0.0;
  for (const auto& t : s.terms) sum += t.first * t.second.mass_in(cube, opt);
  return sum;
}

std::vector<Point> SignedMeasure::sample(std::size_t n, const Box& cube, Rng& rng) const {
  const int d = impl_->d;
  std::vector<Point> out;
  out.reserve(n);
  auto uniform = [&](double a, double b) { return a + (b - a) * NormalSampler::uniform(rng); };
  if (const auto* r = std::get_if<DensityRep>(&impl_->rep)) {
    const Box region = r->support.intersect(cube);
    if (r->zero || region.empty()) throw DomainError("sample: no mass in the cube");
    if (!region.bounded()) throw DomainError("sample: unbounded sampling region");
    double bound;
    if (r->sup_abs) {
      bound = *r->sup_abs;
    } else {
      // grid estimate with headroom; exact bounds should be supplied when known
      bound = 0.0;
      box_rule(region, 2, 6).for_each(
          [&](const Point& y, double) { bound = std::max(bound, std::abs(r->f(y))); });
      bound *= 1.5;
    }
    if (!(bound > 0.0) || !std::isfinite(bound))
      throw DomainError("sample: density bound unavailable");
    std::size_t attempts = 0;
    while (out.size() < n) {
      if (++attempts > 2000 * (n + 10)) throw BudgetError("sample: rejection budget exhausted");
      Point y(d);
      for (int k = 0; k < d; ++k) y(k) = uniform(region.lo(k), region.hi(k));
      if (NormalSampler::uniform(rng) * bound <= std::abs(r->f(y))) out.push_back(y);
    }
    return out;
  }
  if (const auto* a = std::get_if<AxisRep>(&impl_->rep)) {
    const Box region = a->box().intersect(cube);
    const double base = a->lo(a->axis);
    const double lo = region.lo(a->axis), hi = region.hi(a->axis);
    if (mass_in(cube) == 0.0) throw DomainError("sample: no mass in the cube");
    std::vector<std::pair<double, double>> cells;
    if (a->type == AxisRep::Type::Cantor) {
      // cells of width comparable to the window; each carries equal mass
      const double width = std::max(hi - lo, 1e-300);
      int level = 0;
      while (a->side * std::pow(3.0, -level) > width && level < 40) ++level;
      std::vector<std::tuple<double, double, int>> stack{{base, a->side, 0}};
      while (!stack.empty()) {
        auto [ca, w, lev] = stack.back();
        stack.pop_back();
        if (ca + w < lo || ca > hi) continue;
        if (lev == level) {
          cells.emplace_back(ca, w);
          continue;
        }
        stack.emplace_back(ca + 2.0 * w / 3.0, w / 3.0, lev + 1);
        stack.emplace_back(ca, w / 3.0, lev + 1);
      }
    }
    while (out.size() < n) {
      double ya;
      if (a->type == AxisRep::Type::Dirac) {
        ya = a->offset;
      } else {
        const auto& cell = cells[std::min<std::size_t>(
            cells.size() - 1,
            static_cast<std::size_t>(NormalSampler::uniform(rng) * cells.size()))];
        double u = 0.0, scale = 1.0;
        for (int i = 0; i < 40; ++i) {
          scale /= 3.0;
          if (rng() & 1ULL) u += 2.0 * scale;
        }
        ya = cell.first + cell.second * u;
        if (ya < lo || ya > hi) continue;
      }
      Point y(d);
      for (int k = 0; k < d; ++k)
        y(k) = (k == a->axis) ? ya : uniform(region.lo(k), region.hi(k));
      out.push_back(y);
    }
    return out;
  }
  const auto& s = std::get<SumRep>(impl_->rep);
  std::vector<double> masses;
  double total = 0.0;
  for (const auto& t : s.terms) {
    const double m = std::abs(t.first) * t.second.abs().mass_in(cube);
    masses.push_back(m);
    total += m;
  }
  if (!(total > 0.0)) throw DomainError("sample: no mass in the cube");
  std::vector<std::size_t> counts(s.terms.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    double u = NormalSampler::uniform(rng) * total;
    std::size_t k = 0;
    while (k + 1 < masses.size() && u >= masses[k]) u -= masses[k++];
    ++counts[k];
  }
  for (std::size_t k = 0; k < s.terms.size(); ++k) {
    if (counts[k] == 0) continue;
    auto pts = s.terms[k].second.abs().sample(counts[k], cube, rng);
    out.insert(out.end(), pts.begin(), pts.end());
  }
  return out;
}

std::vector<Point> SignedMeasure::suggested_sup_grid(double margin, int per_dim) const {
  const int d = impl_->d;
  std::vector<Point> grid;
  if (const auto* a = std::get_if<AxisRep>(&impl_->rep)) {
    const Box box = a->box();
    Point center = (0.5 * (box.lo + box.hi)).eval();
    std::set<double> axial;
    const double lo = box.lo(a->axis), hi = box.hi(a->axis);
    const int m = std::max(2, 4 * per_dim);
    for (int i = 0; i <= m; ++i) axial.insert(lo - margin + (hi - lo + 2 * margin) * i / m);
    if (a->type == AxisRep::Type::Cantor) {
      for (double u : {0.0, 1.0 / 27, 2.0 / 27, 1.0 / 9, 2.0 / 9, 1.0 / 3, 2.0 / 3, 7.0 / 9,
                       8.0 / 9, 25.0 / 27, 26.0 / 27, 1.0})
        axial.insert(lo + a->side * u);
    } else {
      axial.insert(a->offset);
    }
    for (double v : axial) {
      Point p = center;
      p(a->axis) = v;
      grid.push_back(p);
    }
    return grid;
  }
  if (const auto* s = std::get_if<SumRep>(&impl_->rep)) {
    for (const auto& t : s->terms) {
      auto g = t.second.suggested_sup_grid(margin, per_dim);
      grid.insert(grid.end(), g.begin(), g.end());
    }
    return grid;
  }
  const Box eff = effective_box();
  if (!eff.bounded()) return {Point::Zero(d)};
  const Box b = eff.expanded(margin);
  std::vector<QuadRule> axes(d);
  for (int k = 0; k < d; ++k) {
    for (int i = 0; i < per_dim; ++i) {
      const double frac = per_dim == 1 ? 0.5 : static_cast<double>(i) / (per_dim - 1);
      axes[k].nodes.push_back(b.lo(k) + frac * (b.hi(k) - b.lo(k)));
      axes[k].weights.push_back(1.0);
    }
  }
  TensorRule(std::move(axes)).for_each([&](const Point& p, double) { grid.push_back(p); });
  // the center of the effective box is always probed
  grid.push_back((0.5 * (eff.lo + eff.hi)).eval());
  return grid;
}

// ---------------------------------------------------------------------------
// JSON

json SignedMeasure::to_json() const {
  if (const auto* r = std::get_if<DensityRep>(&impl_->rep)) return r->description;
  if (const auto* a = std::get_if<AxisRep>(&impl_->rep)) {
    json j{{"axis", a->axis}, {"weight", a->weight}, {"lo", point_json(a->lo)},
           {"side", a->side}};
    if (a->type == AxisRep::Type::Cantor) {
      j["kind"] = "cantor_product";
    } else {
      j["kind"] = "hyperplane";
      j["offset"] = a->offset;
    }
    return j;
  }
  const auto& s = std::get<SumRep>(impl_->rep);
  json terms = json::array();
  for (const auto& t : s.terms)
    terms.push_back(json{{"coefficient", t.first}, {"measure", t.second.to_json()}});
  return json{{"kind", "sum"}, {"terms", terms}};
}

SignedMeasure SignedMeasure::from_json(const json& j, int d) {
  if (!j.is_object()) throw SchemaError("measure: expected an object");
  if (!j.contains("kind") || !j.at("kind").is_string())
    throw SchemaError("measure: missing string 'kind'");
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "density") {
    if (!j.contains("profile") || !j.at("profile").is_string())
      throw SchemaError("density: missing string 'profile'");
    const std::string profile = j.at("profile").get<std::string>();
    if (profile == "zero") {
      reject_unknown(j, {"kind", "profile"}, "density/zero");
      return zero(d);
    }
    if (profile == "constant") {
      reject_unknown(j, {"kind", "profile", "value"}, "density/constant");
      return constant(d, number_at(j, "value", "density/constant"));
    }
    if (profile == "gaussian_bump") {
      reject_unknown(j, {"kind", "profile", "amplitude", "width", "center"},
                     "density/gaussian_bump");
      const Point c = j.contains("center") ? point_from_json(j.at("center"), d, "center")
                                           : Point::Zero(d);
      return gaussian_bump(number_at(j, "amplitude", "density/gaussian_bump"),
                           number_at(j, "width", "density/gaussian_bump"), c);
    }
    if (profile == "linear") {
      reject_unknown(j, {"kind", "profile", "coordinate", "coefficient", "clip"},
                     "density/linear");
      return linear(d, integer_at(j, "coordinate", "density/linear"),
                    number_at(j, "coefficient", "density/linear"),
                    number_at(j, "clip", "density/linear"));
    }
    if (profile == "radial_power") {
      reject_unknown(j, {"kind", "profile", "amplitude", "exponent", "radius", "center"},
                     "density/radial_power");
      const Point c = j.contains("center") ? point_from_json(j.at("center"), d, "center")
                                           : Point::Zero(d);
      return radial_power(number_at(j, "amplitude", "density/radial_power"),
                          number_at(j, "exponent", "density/radial_power"),
                          number_at(j, "radius", "density/radial_power"), c);
    }
    throw SchemaError("density: unknown profile '" + profile + "'");
  }
  if (kind == "cantor_product") {
    reject_unknown(j, {"kind", "axis", "weight", "lo", "side"}, "cantor_product");
    return cantor_product(integer_at(j, "axis", "cantor_product"),
                          number_at(j, "weight", "cantor_product"),
                          point_from_json(j.at("lo"), d, "cantor_product/lo"),
                          number_at(j, "side", "cantor_product"));
  }
  if (kind == "hyperplane") {
    reject_unknown(j, {"kind", "axis", "offset", "weight", "lo", "side"}, "hyperplane");
    return hyperplane(integer_at(j, "axis", "hyperplane"), number_at(j, "offset", "hyperplane"),
                      number_at(j, "weight", "hyperplane"),
                      point_from_json(j.at("lo"), d, "hyperplane/lo"),
                      number_at(j, "side", "hyperplane"));
  }
  if (kind == "sum") {
    reject_unknown(j, {"kind", "terms"}, "sum");
    if (!j.contains("terms") || !j.at("terms").is_array() || j.at("terms").empty())
      throw SchemaError("sum: 'terms' must be a nonempty array");
    std::vector<std::pair<double, SignedMeasure>> terms;
    for (const auto& t : j.at("terms")) {
      reject_unknown(t, {"coefficient", "measure"}, "sum/term");
      if (!t.contains("measure")) throw SchemaError("sum/term: missing 'measure'");
      terms.emplace_back(number_at(t, "coefficient", "sum/term"), from_json(t.at("measure"), d));
    }
    return weighted_sum(std::move(terms));
  }
  throw SchemaError("measure: unknown kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// DriftMeasure

DriftMeasure::DriftMeasure(int d, std::vector<SignedMeasure> components)
    : dimension_(d), components_(std::move(components)) {
  check_dimension(d);
  if (static_cast<int>(components_.size()) != d)
    throw DomainError("DriftMeasure: need exactly d components");
  for (const auto& c : components_)
    if (c.dimension() != d) throw DomainError("DriftMeasure: component dimension mismatch");
}

DriftMeasure DriftMeasure::zero(int d) {
  return DriftMeasure(d, std::vector<SignedMeasure>(d, SignedMeasure::zero(d)));
}

DriftMeasure DriftMeasure::constant(const Point& c) {
  const int d = static_cast<int>(c.size());
  std::vector<SignedMeasure> comps;
  for (int i = 0; i < d; ++i) comps.push_back(SignedMeasure::constant(d, c(i)));
  return DriftMeasure(d, std::move(comps));
}

DriftMeasure DriftMeasure::ornstein_uhlenbeck(int d, double gamma, double clip) {
  std::vector<SignedMeasure> comps;
  for (int i = 0; i < d; ++i) comps.push_back(SignedMeasure::linear(d, i, -gamma, clip));
  return DriftMeasure(d, std::move(comps));
}

DriftMeasure DriftMeasure::gaussian_bump(double amplitude, double width, const Point& center,
                                         const Point& direction) {
  const int d = static_cast<int>(center.size());
  if (direction.size() != d) throw DomainError("gaussian_bump: direction dimension mismatch");
  std::vector<SignedMeasure> comps;
  for (int i = 0; i < d; ++i)
    comps.push_back(SignedMeasure::gaussian_bump(amplitude * direction(i), width, center));
  return DriftMeasure(d, std::move(comps));
}

SignedMeasure DriftMeasure::total_variation_sum() const {
  std::vector<std::pair<double, SignedMeasure>> terms;
  for (const auto& c : components_) terms.emplace_back(1.0, c.abs());
  return SignedMeasure::weighted_sum(std::move(terms));
}

bool DriftMeasure::has_density() const {
  for (const auto& c : components_)
    if (!c.has_density()) return false;
  return true;
}

json DriftMeasure::to_json() const {
  json comps = json::array();
  for (const auto& c : components_) comps.push_back(c.to_json());
  return json{{"dimension", dimension_}, {"components", comps}};
}

DriftMeasure DriftMeasure::from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("drift: expected an object");
  reject_unknown(j, {"dimension", "components"}, "drift");
  const int d = integer_at(j, "dimension", "drift");
  if (d < 1 || d > kMaxDim) throw SchemaError("drift: dimension out of range");
  if (!j.contains("components") || !j.at("components").is_array() ||
      static_cast<int>(j.at("components").size()) != d)
    throw SchemaError("drift: 'components' must list exactly d measures");
  std::vector<SignedMeasure> comps;
  for (const auto& c : j.at("components")) comps.push_back(SignedMeasure::from_json(c, d));
  return DriftMeasure(d, std::move(comps));
}

// ---------------------------------------------------------------------------
// Mollifier

namespace {

double bump_profile(double r2) { return r2 < 1.0 ? std::exp(-1.0 / (1.0 - r2)) : 0.0; }

struct MarginalTable {
  std::vector<double> values;  // eta on a uniform grid of [0, 1]
  double step = 0.0;
};

}  // namespace

double Mollifier::normalization(int dimension) {
  static std::map<int, double> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(dimension);
  if (it != cache.end()) return it->second;
  const QuadRule rule = composite_legendre(0.0, 1.0, 64, 16);
  double radial = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const double r = rule.nodes[i];
    radial += rule.weights[i] * std::pow(r, dimension - 1) * bump_profile(r * r);
  }
  const double c = 1.0 / (sphere_area(dimension) * radial);
  cache.emplace(dimension, c);
  return c;
}

Mollifier::Mollifier(int dimension, int level)
    : dimension_(dimension), level_(level), scale_(std::ldexp(1.0, level)) {
  check_dimension(dimension);
  if (level < 0) throw DomainError("Mollifier: level must be nonnegative");
}

double Mollifier::radius() const { return 1.0 / scale_; }

double Mollifier::operator()(const Point& x) const {
  const double r2 = (scale_ * x).squaredNorm();
  return std::pow(scale_, dimension_) * normalization(dimension_) * bump_profile(r2);
}

double Mollifier::marginal(double h) const {
  const int d = dimension_;
  const double u = std::abs(h) * scale_;
  if (u >= 1.0) return 0.0;
  if (d == 1) return scale_ * normalization(1) * bump_profile(u * u);
  static std::map<int, MarginalTable> cache;
  static std::mutex mu;
  const MarginalTable* table;
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(d);
    if (it == cache.end()) {
      MarginalTable t;
      const int n = 4096;
      t.step = 1.0 / n;
      t.values.resize(n + 3, 0.0);
      const double c = normalization(d) * sphere_area(d - 1);
      for (int i = 0; i <= n; ++i) {
        const double hh = i * t.step;
        const double top = std::sqrt(std::max(0.0, 1.0 - hh * hh));
        if (top <= 0.0) continue;
        const QuadRule rule = composite_legendre(0.0, top, 4, 12);
        double acc = 0.0;
        for (std::size_t k = 0; k < rule.size(); ++k) {
          const double rho = rule.nodes[k];
          acc += rule.weights[k] * std::pow(rho, d - 2) * bump_profile(hh * hh + rho * rho);
        }
        t.values[i] = c * acc;
      }
      it = cache.emplace(d, std::move(t)).first;
    }
    table = &it->second;
  }
  // Catmull-Rom interpolation; eta is even, so mirror at 0
  const double pos = u / table->step;
  const int i = static_cast<int>(pos);
  const double f = pos - i;
  auto at = [&](int k) { return table->values[static_cast<std::size_t>(std::abs(k))]; };
  const double p0 = at(i - 1), p1 = at(i), p2 = at(i + 1), p3 = at(i + 2);
  const double v = p1 + 0.5 * f * (p2 - p0 + f * (2 * p0 - 5 * p1 + 4 * p2 - p3 + f * (3 * (p1 - p2) + p3 - p0)));
  return scale_ * std::max(0.0, v);
}

double SignedMeasure::mollify(int level, const Point& x, const IntegrationOptions& opt) const {
  const int d = impl_->d;
  const Mollifier phi(d, level);
  const double radius = phi.radius();
  if (const auto* r = std::get_if<DensityRep>(&impl_->rep)) {
    if (r->zero) return 0.0;
    const Box region = r->support.intersect(Box::cube(x, radius));
    if (region.empty()) return 0.0;
    // dividing by the discrete mass of phi_n makes constants exact
    const TensorRule rule = box_rule(region, 2, std::max(opt.nodes_per_panel, 8));
    const auto& f = r->f;
    double num = 0.0, den = 0.0;
    rule.for_each([&](const Point& y, double w) {
      const double k = w * phi(x - y);
      num += k * f(y);
      den += k;
    });
    if (!r->support.contains(Box::cube(x, radius))) {
      // a clipped ball: normalize by the exact mass of phi_n instead
      den = 0.0;
      const TensorRule ball = box_rule(Box::cube(x, radius), 2, std::max(opt.nodes_per_panel, 8));
      ball.for_each([&](const Point& y, double w) { den += w * phi(x - y); });
    }
    return den > 0.0 ? num / den : 0.0;
  }
  if (const auto* a = std::get_if<AxisRep>(&impl_->rep)) {
    const Box box = a->box();
    const double xa = x(a->axis);
    bool inside = true;
    Box others_cut{Point(std::max(d - 1, 1)), Point(std::max(d - 1, 1))};
    Point xo;
    if (d > 1) {
      const Box ob = other_box(*a, box);
      xo = drop_axis(x, a->axis);
      inside = ((xo.array() - radius) >= ob.lo.array()).all() &&
               ((xo.array() + radius) <= ob.hi.array()).all();
      others_cut = ob.intersect(Box::cube(xo, radius));
      if (others_cut.empty()) return 0.0;
    }
    auto slice = [&](double ya) {
      const double h = xa - ya;
      if (std::abs(h) >= radius) return 0.0;
      if (inside) return phi.marginal(h);
      const TensorRule rule = box_rule(others_cut, 2, 8);
      return rule.integrate([&](const Point& u) {
        Point diff = x - insert_axis(u, a->axis, ya);
        return phi(diff);
      });
    };
    const double lo = box.lo(a->axis);
    if (a->type == AxisRep::Type::Dirac) {
      if (a->offset < lo || a->offset > lo + a->side) return 0.0;
      return a->weight * slice(a->offset);
    }
    double sum = 0.0;
    const double min_w = radius / 8.0;
    cantor_walk(
        lo, a->side, opt.max_cantor_depth,
        [&](double ca, double cb) { return cb >= xa - radius && ca <= xa + radius; },
        [&](double ca, double cb, int) { return cb - ca > min_w; },
        [&](double y, double m, double) { sum += m * slice(y); });
    return a->weight * sum;
  }
  const auto& s = std::get<SumRep>(impl_->rep);
  double sum = 0.0;
  for (const auto& t : s.terms) sum += t.first * t.second.mollify(level, x, opt);
  return sum;
}

Point mollified_drift(const DriftMeasure& mu, int level, const Point& x,
                      const IntegrationOptions& opt) {
  if (x.size() != mu.dimension()) throw DomainError("mollified_drift: dimension mismatch");
  if (!x.allFinite()) throw DomainError("mollified_drift: x must be finite");
  Point b(mu.dimension());
  for (int i = 0; i < mu.dimension(); ++i) b(i) = mu.component(i).mollify(level, x, opt);
  return b;
}

// ---------------------------------------------------------------------------
// DriftField

namespace {

// Upper bound of |phi_n * mu| for a single measure.
double mollified_bound(const SignedMeasure& m, int level) {
  if (m.has_density()) {
    const auto s = m.sup_abs_density();
    return s ? *s : kInf;
  }
  if (m.kind() == SignedMeasure::Kind::WeightedSum) {
    const json j = m.to_json();
    const int d = m.dimension();
    double total = 0.0;
    for (const auto& t : j.at("terms"))
      total += std::abs(t.at("coefficient").get<double>()) *
               mollified_bound(SignedMeasure::from_json(t.at("measure"), d), level);
    return total;
  }
  const json j = m.to_json();
  const Mollifier phi(m.dimension(), level);
  return std::abs(j.at("weight").get<double>()) * phi.marginal(0.0);
}

}  // namespace

DriftField::DriftField(int d, Function f, double sup_norm)
    : dimension_(d), f_(std::move(f)), sup_norm_(sup_norm) {}

DriftField DriftField::zero(int d) {
  DriftField out(d, [d](const Point&) { return Point::Zero(d); }, 0.0);
  out.zero_ = true;
  return out;
}

DriftField DriftField::from_measure(const DriftMeasure& mu, std::optional<int> level,
                                    const IntegrationOptions& opt) {
  const int d = mu.dimension();
  bool all_zero = true;
  for (const auto& c : mu.components())
    all_zero = all_zero && c.kind() == SignedMeasure::Kind::Density &&
               c.to_json().value("profile", "") == "zero";
  if (all_zero) return zero(d);
  double bound2 = 0.0;
  if (!level) {
    if (!mu.has_density())
      throw DomainError("DriftField: singular components need a mollification level");
    for (const auto& c : mu.components()) {
      const auto s = c.sup_abs_density();
      bound2 += s ? (*s) * (*s) : kInf;
    }
    return DriftField(
        d,
        [mu](const Point& x) {
          Point b(mu.dimension());
          for (int i = 0; i < mu.dimension(); ++i) b(i) = mu.component(i).density_at(x);
          return b;
        },
        std::sqrt(bound2));
  }
  const int n = *level;
  for (const auto& c : mu.components()) {
    const double b = mollified_bound(c, n);
    bound2 += b * b;
  }
  return DriftField(
      d, [mu, n, opt](const Point& x) { return mollified_drift(mu, n, x, opt); },
      std::sqrt(bound2));
}

}  // namespace katolab
