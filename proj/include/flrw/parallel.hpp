#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace flrw {

/// Worker count from FLRWSIM_WORKERS (default 1, clamped to [1, 64]).
inline int worker_count() {
  static const int n = [] {
    const char *v = std::getenv("FLRWSIM_WORKERS");
    if (v == nullptr || *v == '\0') return 1;
    try {
      return std::clamp(std::stoi(v), 1, 64);
    } catch (...) {
      return 1;
    }
  }();
  return n;
}

/// Runs f(i) for i in [0, n). Tasks must write disjoint outputs; results are
/// then independent of the worker count. The first exception is rethrown.
template <class F> void parallel_for(std::size_t n, F &&f) {
  const std::size_t workers = std::min<std::size_t>(std::size_t(worker_count()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::exception_ptr first;
  std::mutex m;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard lock(m);
          if (!first) first = std::current_exception();
        }
      }
    });
  for (auto &t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

} // namespace flrw
