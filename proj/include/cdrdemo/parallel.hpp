#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace cdrdemo {

// Splits [0, n) into `threads` contiguous chunks and runs body(begin, end,
// chunk_index) on each, joining before return. Chunk boundaries depend only
// on n and the thread count; callers that need thread-count-independent
// results must make `body` write-disjoint and reduce in index order.
template <typename Body>
void parallel_for(std::size_t n, unsigned threads, Body&& body) {
  threads = std::max(1u, threads);
  if (threads == 1 || n < 2) {
    body(std::size_t{0}, n, std::size_t{0});
    return;
  }
  const std::size_t chunks = std::min<std::size_t>(threads, n);
  std::vector<std::exception_ptr> errors(chunks);
  {
    std::vector<std::jthread> workers;
    workers.reserve(chunks);
    for (std::size_t c = 0; c < chunks; ++c) {
      const std::size_t begin = n * c / chunks;
      const std::size_t end = n * (c + 1) / chunks;
      workers.emplace_back([&, begin, end, c] {
        try {
          body(begin, end, c);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// Runs body(i) for every i in [0, n), handing indices to workers on demand.
// Suited to uneven tasks; `body` must be write-disjoint by index.
template <typename Body>
void parallel_for_each(std::size_t n, unsigned threads, Body&& body) {
  std::atomic<std::size_t> next{0};
  parallel_for(std::min<std::size_t>(std::max(1u, threads), n), threads,
               [&](std::size_t, std::size_t, std::size_t) {
                 for (std::size_t i = next++; i < n; i = next++) body(i);
               });
}

}  // namespace cdrdemo
