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

// Closed-form Gaussian kernels of (1/2)Laplacian and the elementary series used
// by the moment and Laplace bounds. Everything here is header-only and templated
// on the scalar type of the Eigen arguments.

#include "katolab/types.hpp"

#include <cmath>
#include <numbers>

namespace katolab {

namespace detail {
template <typename Scalar>
void require_positive_time(Scalar t, const char* what) {
  if (!(t > Scalar(0))) throw DomainError(std::string(what) + ": time must be positive");
}
template <typename A, typename B>
void require_same_size(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y) {
  if (x.size() != y.size()) throw DomainError("points have different dimensions");
}
}  // namespace detail

/// Surface area of the unit sphere S^{d-1} in R^d.
inline double sphere_area(int d) {
  return 2.0 * std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d);
}

/// Volume of the unit ball in R^d.
inline double unit_ball_volume(int d) {
  return std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d + 1.0);
}

/// log of G_a(s,x,y) = s^{-d/2} exp(-a|x-y|^2 / 2s).
template <typename DerivedX, typename DerivedY>
typename DerivedX::Scalar log_g_kernel(typename DerivedX::Scalar a, typename DerivedX::Scalar s,
                                       const Eigen::MatrixBase<DerivedX>& x,
                                       const Eigen::MatrixBase<DerivedY>& y) {
  using Scalar = typename DerivedX::Scalar;
  detail::require_positive_time(s, "g_kernel");
  if (!(a > Scalar(0))) throw DomainError("g_kernel: shape parameter a must be positive");
  detail::require_same_size(x, y);
  const auto d = static_cast<Scalar>(x.size());
  return -Scalar(0.5) * d * std::log(s) - a * (x - y).squaredNorm() / (Scalar(2) * s);
}

template <typename DerivedX, typename DerivedY>
typename DerivedX::Scalar g_kernel(typename DerivedX::Scalar a, typename DerivedX::Scalar s,
                                   const Eigen::MatrixBase<DerivedX>& x,
                                   const Eigen::MatrixBase<DerivedY>& y) {
  return std::exp(log_g_kernel(a, s, x, y));
}

/// log of the Brownian transition density p(t,x,y) = (2 pi t)^{-d/2} exp(-|x-y|^2/2t).
template <typename DerivedX, typename DerivedY>
typename DerivedX::Scalar log_gaussian_p(typename DerivedX::Scalar t,
                                         const Eigen::MatrixBase<DerivedX>& x,
                                         const Eigen::MatrixBase<DerivedY>& y) {
  using Scalar = typename DerivedX::Scalar;
  detail::require_positive_time(t, "gaussian_p");
  detail::require_same_size(x, y);
  const auto d = static_cast<Scalar>(x.size());
  return -Scalar(0.5) * d * std::log(Scalar(2) * std::numbers::pi_v<Scalar> * t) -
         (x - y).squaredNorm() / (Scalar(2) * t);
}

template <typename DerivedX, typename DerivedY>
typename DerivedX::Scalar gaussian_p(typename DerivedX::Scalar t,
                                     const Eigen::MatrixBase<DerivedX>& x,
                                     const Eigen::MatrixBase<DerivedY>& y) {
  return std::exp(log_gaussian_p(t, x, y));
}

/// Gradient in z of p(s,z,y): -((z - y)/s) p(s,z,y).
template <typename DerivedZ, typename DerivedY>
PointT<typename DerivedZ::Scalar> gaussian_grad(typename DerivedZ::Scalar s,
                                                const Eigen::MatrixBase<DerivedZ>& z,
                                                const Eigen::MatrixBase<DerivedY>& y) {
  const auto p = gaussian_p(s, z, y);
  return -((z - y) / s) * p;
}

/// m_delta = sup_{r>0} r exp(-delta r^2/2) = 1/sqrt(e delta), valid for every delta > 0.
inline double m_delta_unchecked(double delta) {
  if (!(delta > 0.0)) throw DomainError("m_delta: delta must be positive");
  return 1.0 / std::sqrt(std::numbers::e * delta);
}

/// m_delta restricted to 0 < delta <= 1 (delta = 1 is the boundary probe).
inline double m_delta(double delta) {
  if (!(delta > 0.0 && delta <= 1.0)) throw DomainError("m_delta: delta must lie in (0, 1]");
  return m_delta_unchecked(delta);
}

inline double log_factorial(int n) { return std::lgamma(static_cast<double>(n) + 1.0); }

/// Partial sum of Phi(z) = sum_n z^n / sqrt(n!) with a certified bound on the tail.
struct PhiSeries {
  double value = 0.0;
  double tail_bound = 0.0;
  int terms = 0;
};

/// Extends past `terms` until z^N/sqrt(N!) < 1e-12 and the remaining terms are
/// geometrically dominated; the tail is bounded by the term ratio at the cut.
inline PhiSeries phi_series(double z, int terms = 1) {
  if (!(z >= 0.0)) throw DomainError("phi_series: z must be nonnegative");
  PhiSeries out;
  if (z == 0.0) {
    out.value = 1.0;
    out.terms = 1;
    return out;
  }
  const double log_z = std::log(z);
  int n = 0;
  for (;; ++n) {
    const double log_term = n * log_z - 0.5 * log_factorial(n);
    out.value += std::exp(log_term);
    const int next = n + 1;
    const double ratio = z / std::sqrt(static_cast<double>(next + 1));
    const double next_term = std::exp(next * log_z - 0.5 * log_factorial(next));
    if (next >= terms && next_term < 1e-12 && ratio < 1.0) {
      out.terms = next;
      // terms beyond `next` shrink at least by `ratio` each step
      out.tail_bound = next_term / (1.0 - ratio);
      return out;
    }
  }
}

/// Closed-form majorant (1+z) exp(z^2) of Phi.
inline double phi_majorant(double z) { return (1.0 + z) * std::exp(z * z); }

/// alpha_0 = alpha_1 = 1, alpha_n = prod_{k=2}^n (1-1/k)^{(k-1)/2} (1/k)^{1/2}.
inline double alpha_coeff(int n) {
  if (n < 0) throw DomainError("alpha_coeff: n must be nonnegative");
  double log_alpha = 0.0;
  for (int k = 2; k <= n; ++k) {
    const double kk = k;
    log_alpha += 0.5 * (kk - 1.0) * std::log1p(-1.0 / kk) - 0.5 * std::log(kk);
  }
  return std::exp(log_alpha);
}

/// n! alpha_n (sqrt(t) Lambda_t)^n, the moment majorant of the drift functional.
inline double moment_bound(int n, double t, double lambda_t) {
  if (n == 0) return 1.0;
  return std::exp(log_factorial(n) + std::log(alpha_coeff(n)) +
                  n * std::log(std::sqrt(t) * lambda_t));
}

}  // namespace katolab
