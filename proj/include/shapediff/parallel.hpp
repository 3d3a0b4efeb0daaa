//
// Project ShapeDiff - Copyright 2026 ShapeDiff Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef SHAPEDIFF_PARALLEL_HPP_
#define SHAPEDIFF_PARALLEL_HPP_

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace shapediff {

/// Runs f(i) for i in [0, n) across up to `threads` workers with a static
/// partition. Results must be written to per-index slots by the caller so the
/// final reduction order stays deterministic.
template <class F>
void parallel_for(int n, F&& f, int threads = 0) {
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex err_mutex;
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += threads) f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace shapediff

#endif  // SHAPEDIFF_PARALLEL_HPP_
