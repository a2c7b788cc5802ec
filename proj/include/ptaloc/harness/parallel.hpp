#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace ptaloc {

inline int resolve_threads(int threads) {
  if (threads > 0) return threads;
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

/// Calls fn(k, worker) for k in [0, n) on up to `threads` workers (0 means
/// one per hardware thread). Items are claimed dynamically, so fn must
/// write its result into slot k rather than rely on order. The first
/// exception stops the remaining work and is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const int workers = std::min<int>(resolve_threads(threads), static_cast<int>(std::max<std::size_t>(1, n)));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr error;
  auto body = [&](int w) {
    try {
      for (std::size_t k = next++; k < n && !stop; k = next++) fn(k, w);
    } catch (...) {
      if (!stop.exchange(true)) error = std::current_exception();
    }
  };
  if (workers == 1) {
    body(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(body, w);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
}

inline int worker_count(std::size_t n, int threads) {
  return std::min<int>(resolve_threads(threads), static_cast<int>(std::max<std::size_t>(1, n)));
}

}  // namespace ptaloc
