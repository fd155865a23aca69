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

#include "katolab/types.hpp"

#include <functional>
#include <vector>

namespace katolab {

struct QuadRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  std::size_t size() const { return nodes.size(); }
};

/// Gauss-Legendre rule on [-1, 1] (Golub-Welsch, cached).
const QuadRule& gauss_legendre(int n);

/// Gauss-Hermite rule for the standard normal: sum w_i f(x_i) ~ E[f(N(0,1))].
const QuadRule& gauss_hermite(int n);

/// Gauss-Legendre rule mapped to [a, b].
QuadRule gauss_legendre(int n, double a, double b);

/// Composite Gauss-Legendre on [a, b] with `panels` equal panels of `n` nodes.
QuadRule composite_legendre(double a, double b, int panels, int n);

/// Tensor-product rule for axis-aligned boxes, expanded lazily.
class TensorRule {
 public:
  explicit TensorRule(std::vector<QuadRule> axes);

  int dimension() const { return static_cast<int>(axes_.size()); }
  std::size_t size() const { return size_; }
  /// Calls f(point, weight) for every tensor node.
  void for_each(const std::function<void(const Point&, double)>& f) const;
  double integrate(const std::function<double(const Point&)>& f) const;

 private:
  std::vector<QuadRule> axes_;
  std::size_t size_ = 0;
};

/// Result of an integral over (0, upper] with an integrable endpoint
/// singularity at 0, evaluated on dyadic panels [upper 2^{-j-1}, upper 2^{-j}].
struct GeometricIntegral {
  double value = 0.0;
  double error = 0.0;  ///< geometric-tail extrapolation of the unresolved part
  int panels = 0;
  bool diverging = false;  ///< panel contributions stopped decaying
};

struct GeometricOptions {
  int nodes_per_panel = 8;
  int max_panels = 60;
  int min_panels = 4;
  double rel_tol = 1e-10;
};

GeometricIntegral integrate_geometric(const std::function<double(double)>& g, double upper,
                                      const GeometricOptions& opt = {});

}  // namespace katolab
