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

#include <cmath>
#include <cstdint>
#include <random>

namespace katolab {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Independent stream for (seed, index): every path / stratum owns one.
inline Rng make_stream(std::uint64_t seed, std::uint64_t index) {
  const std::uint64_t s = mix64(mix64(seed) ^ mix64(index + 0x632be59bd9b4e019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

/// Standard normal by Marsaglia's polar method; fully specified, so streams are
/// reproducible independent of the standard library's distribution code.
class NormalSampler {
 public:
  double operator()(Rng& rng) {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform(rng) - 1.0;
      v = 2.0 * uniform(rng) - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  static double uniform(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
  }

 private:
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace katolab
