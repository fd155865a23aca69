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

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace katolab {

namespace detail {
inline std::atomic<unsigned>& worker_setting() {
  static std::atomic<unsigned> workers{0};
  return workers;
}
}  // namespace detail

/// Number of worker threads; 0 selects std::thread::hardware_concurrency().
inline void set_worker_count(unsigned n) { detail::worker_setting() = n; }

inline unsigned worker_count() {
  const unsigned n = detail::worker_setting();
  if (n > 0) return n;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs f(i) for i in [0, n). Work items are independent; callers store
/// per-item results and reduce them in index order, so output never depends
/// on the worker count.
template <typename F>
void parallel_for(std::size_t n, F&& f) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(worker_count(), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace katolab
