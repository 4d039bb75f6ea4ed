#pragma once

// Fixed-tile parallelism. Work is always cut into the same tiles no matter
// how many workers run them, and each tile writes a disjoint output range,
// so results do not depend on the worker count.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace glyconet {

namespace detail {
inline std::atomic<int>& worker_count() {
  static std::atomic<int> n{1};
  return n;
}
}  // namespace detail

inline int threads() { return detail::worker_count().load(); }
inline void set_threads(int n) { detail::worker_count().store(std::max(1, n)); }

// Runs fn(tile) for tile in [0, tiles).
template <typename Fn>
void parallel_for(std::size_t tiles, Fn&& fn) {
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(threads()), tiles);
  if (workers <= 1) {
    for (std::size_t t = 0; t < tiles; ++t) fn(t);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= tiles) return;
      try {
        fn(t);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace glyconet
