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

#include "katolab/quadrature.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>

namespace katolab {

namespace {

// Golub-Welsch: nodes are eigenvalues of the symmetric Jacobi matrix, weights
// are mu0 times the squared first components of the eigenvectors.
QuadRule golub_welsch(int n, const std::function<double(int)>& offdiag, double mu0) {
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    jacobi(k, k - 1) = offdiag(k);
    jacobi(k - 1, k) = offdiag(k);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
  QuadRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = solver.eigenvalues()(i);
    const double v0 = solver.eigenvectors()(0, i);
    rule.weights[i] = mu0 * v0 * v0;
  }
  // exact symmetry about zero for both families
  for (int i = 0; i < n / 2; ++i) {
    const double x = 0.5 * (rule.nodes[n - 1 - i] - rule.nodes[i]);
    const double w = 0.5 * (rule.weights[n - 1 - i] + rule.weights[i]);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

template <typename Make>
const QuadRule& cached(std::map<int, std::unique_ptr<QuadRule>>& cache, std::mutex& mu, int n,
                       Make make) {
  if (n < 1) throw DomainError("quadrature rule needs at least one node");
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, std::make_unique<QuadRule>(make(n))).first;
  return *it->second;
}

}  // namespace

const QuadRule& gauss_legendre(int n) {
  static std::map<int, std::unique_ptr<QuadRule>> cache;
  static std::mutex mu;
  return cached(cache, mu, n, [](int m) {
    return golub_welsch(
        m, [](int k) { return k / std::sqrt(4.0 * k * k - 1.0); }, 2.0);
  });
}

const QuadRule& gauss_hermite(int n) {
  static std::map<int, std::unique_ptr<QuadRule>> cache;
  static std::mutex mu;
  return cached(cache, mu, n, [](int m) {
    return golub_welsch(
        m, [](int k) { return std::sqrt(static_cast<double>(k)); }, 1.0);
  });
}

QuadRule gauss_legendre(int n, double a, double b) {
  const QuadRule& ref = gauss_legendre(n);
  QuadRule out;
  out.nodes.resize(ref.size());
  out.weights.resize(ref.size());
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    out.nodes[i] = mid + half * ref.nodes[i];
    out.weights[i] = half * ref.weights[i];
  }
  return out;
}

QuadRule composite_legendre(double a, double b, int panels, int n) {
  if (panels < 1) throw DomainError("composite rule needs at least one panel");
  QuadRule out;
  const double h = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    QuadRule piece = gauss_legendre(n, a + p * h, a + (p + 1) * h);
    out.nodes.insert(out.nodes.end(), piece.nodes.begin(), piece.nodes.end());
    out.weights.insert(out.weights.end(), piece.weights.begin(), piece.weights.end());
  }
  return out;
}

TensorRule::TensorRule(std::vector<QuadRule> axes) : axes_(std::move(axes)) {
  size_ = axes_.empty() ? 0 : 1;
  for (const auto& a : axes_) size_ *= a.size();
}

void TensorRule::for_each(const std::function<void(const Point&, double)>& f) const {
  const int d = dimension();
  if (d == 0 || size_ == 0) return;
  std::vector<std::size_t> idx(d, 0);
  Point p(d);
  for (std::size_t count = 0; count < size_; ++count) {
    double w = 1.0;
    for (int k = 0; k < d; ++k) {
      p(k) = axes_[k].nodes[idx[k]];
      w *= axes_[k].weights[idx[k]];
    }
    f(p, w);
    for (int k = d - 1; k >= 0; --k) {
      if (++idx[k] < axes_[k].size()) break;
      idx[k] = 0;
    }
  }
}

double TensorRule::integrate(const std::function<double(const Point&)>& f) const {
  double sum = 0.0;
  for_each([&](const Point& p, double w) { sum += w * f(p); });
  return sum;
}

GeometricIntegral integrate_geometric(const std::function<double(double)>& g, double upper,
                                      const GeometricOptions& opt) {
  GeometricIntegral out;
  if (!(upper > 0.0)) return out;
  double prev = 0.0;
  int stalled = 0;
  double hi = upper;
  for (int j = 0; j < opt.max_panels; ++j) {
    const double lo = 0.5 * hi;
    const QuadRule rule = gauss_legendre(opt.nodes_per_panel, lo, hi);
    double c = 0.0;
    for (std::size_t i = 0; i < rule.size(); ++i) c += rule.weights[i] * g(rule.nodes[i]);
    out.value += c;
    out.panels = j + 1;
    hi = lo;
    if (j > 0 && prev != 0.0 && std::abs(c) >= 0.97 * std::abs(prev)) {
      ++stalled;
    } else {
      stalled = 0;
    }
    if (stalled >= 8) {
      out.diverging = true;
      out.error = std::abs(c) * (opt.max_panels - j);
      return out;
    }
    const bool small = std::abs(c) <= opt.rel_tol * std::abs(out.value) || c == 0.0;
    if (j + 1 >= opt.min_panels && small) {
      const double r = prev != 0.0 ? std::abs(c / prev) : 0.0;
      if (r < 1.0) {
        const double tail = c * r / (1.0 - r);
        out.value += tail;
        out.error = std::abs(tail) + 1e-16 * std::abs(out.value);
      } else {
        out.error = std::abs(c);
      }
      return out;
    }
    prev = c;
  }
  // panel budget exhausted: remainder on [0, hi] estimated from the last ratio
  out.error = std::abs(prev) * 2.0;
  return out;
}

}  // namespace katolab
