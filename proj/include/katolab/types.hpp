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

#include <Eigen/Core>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace katolab {

/// Largest spatial dimension supported. Points are stored inline (no heap).
inline constexpr int kMaxDim = 8;

template <typename Scalar>
using PointT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;

using Point = PointT<double>;

/// Invalid argument outside an operation's domain (t <= 0, delta outside (0,1), ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// The computation is well-posed but the requested regime is not certified,
/// e.g. a horizon beyond T_delta or an overflow guard.
class RefusalError : public std::runtime_error {
 public:
  explicit RefusalError(const std::string& what, double diagnostic = 0.0)
      : std::runtime_error(what), diagnostic_(diagnostic) {}
  double diagnostic() const noexcept { return diagnostic_; }

 private:
  double diagnostic_;
};

/// Quadrature or sampling budget exhausted before the tolerance was met.
class BudgetError : public std::runtime_error {
 public:
  explicit BudgetError(const std::string& what, double residual = 0.0)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Malformed configuration or measure description.
class SchemaError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline Point zero_point(int d) { return Point::Zero(d); }

inline void check_dimension(int d) {
  if (d < 1 || d > kMaxDim)
    throw DomainError("dimension must lie in [1, " + std::to_string(kMaxDim) + "]");
}

}  // namespace katolab
