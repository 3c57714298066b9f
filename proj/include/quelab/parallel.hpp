#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace quelab {

/// Global worker count used by the Monte Carlo drivers. 0 means "one per hardware thread".
inline unsigned& default_workers() {
  static unsigned workers = 1;
  return workers;
}

inline unsigned resolve_workers(unsigned requested) {
  if (requested == 0) requested = std::max(1u, std::thread::hardware_concurrency());
  return requested;
}

/// Splits [0, n) into fixed-size chunks, evaluates `chunk_fn(begin, end)` for each
/// (possibly concurrently) and folds the partial results left to right in chunk order.
///
/// Chunk boundaries do not depend on the worker count, so the result is bit-identical
/// for any number of workers.
template <class T, class ChunkFn, class Combine>
T chunked_reduce(std::size_t n, std::size_t chunk, unsigned workers, ChunkFn chunk_fn, T init,
                 Combine combine) {
  if (n == 0) return init;
  chunk = std::max<std::size_t>(chunk, 1);
  const std::size_t n_chunks = (n + chunk - 1) / chunk;
  std::vector<T> partial(n_chunks);
  auto run = [&](std::size_t c) {
    const std::size_t b = c * chunk;
    const std::size_t e = std::min(n, b + chunk);
    partial[c] = chunk_fn(b, e);
  };

  workers = std::min<unsigned>(resolve_workers(workers), static_cast<unsigned>(n_chunks));
  if (workers <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) run(c);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t c = next++; c < n_chunks; c = next++) {
          try {
            run(c);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  T acc = std::move(init);
  for (auto& p : partial) combine(acc, p);
  return acc;
}

}  // namespace quelab
