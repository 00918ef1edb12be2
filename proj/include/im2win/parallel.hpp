/* Copyright (c) 2026 The im2win-conv Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace im2win {

/// Accumulated wall-clock seconds of the two phases of a lowered convolution.
struct PhaseTimes {
  double transform_s = 0.0;
  double compute_s = 0.0;
};

/// How a kernel should run. workers == 0 picks default_workers().
struct ExecPolicy {
  unsigned workers = 0;
  PhaseTimes* times = nullptr;
};

// Name of the environment variable that overrides the default worker count.
inline constexpr const char* kWorkersEnv = "IM2WIN_WORKERS";

// IM2WIN_WORKERS if set to a positive integer, else hardware concurrency.
unsigned default_workers();
unsigned resolve_workers(const ExecPolicy& exec);

/// Splits [0, count) into at most `workers` contiguous chunks and runs
/// fn(begin, end, worker) for each, worker 0 on the calling thread. The
/// first exception thrown by any chunk is rethrown after all chunks join.
template <class Fn>
void parallel_for(std::size_t count, unsigned workers, Fn&& fn) {
  if (count == 0) return;
  const std::size_t n = std::max<std::size_t>(1, std::min<std::size_t>(workers, count));
  if (n == 1) {
    fn(std::size_t{0}, count, 0u);
    return;
  }
  const std::size_t base = count / n;
  const std::size_t extra = count % n;
  auto bounds = [&](std::size_t w) {
    const std::size_t begin = w * base + std::min(w, extra);
    return std::pair{begin, begin + base + (w < extra ? 1 : 0)};
  };

  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto guarded = [&](std::size_t w) {
    try {
      const auto [b, e] = bounds(w);
      fn(b, e, static_cast<unsigned>(w));
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  };
  {
    std::vector<std::jthread> pool;
    pool.reserve(n - 1);
    for (std::size_t w = 1; w < n; ++w) pool.emplace_back(guarded, w);
    guarded(0);
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace im2win
