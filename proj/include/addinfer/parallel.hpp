#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace addinfer {

//! Worker count: ADDINFER_THREADS if set and positive, else hardware concurrency.
inline unsigned default_worker_count() {
  if (const char* env = std::getenv("ADDINFER_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (...) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

namespace detail {
inline thread_local bool inside_worker = false;
}

/// Runs body(i) for i in [0, count) on up to `workers` threads. Work is pulled
/// from a shared counter; callers store results by index so the outcome does
/// not depend on scheduling. Nested calls run serially on the calling worker.
/// The first exception thrown by any body is rethrown after all workers join.
template <typename Body>
void parallel_for(std::size_t count, unsigned workers, const Body& body) {
  if (workers == 0) workers = default_worker_count();
  const std::size_t nthreads = std::min<std::size_t>(workers, count);
  if (nthreads <= 1 || detail::inside_worker) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto run = [&] {
    detail::inside_worker = true;
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) break;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(count);
      }
    }
    detail::inside_worker = false;
  };
  std::vector<std::thread> pool;
  pool.reserve(nthreads - 1);
  for (std::size_t t = 1; t < nthreads; ++t) pool.emplace_back(run);
  run();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace addinfer
