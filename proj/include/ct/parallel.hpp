#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ct {

// Thread cap resolution order: explicit set_max_threads() > CS_THREADS env >
// hardware. A cap of 1 gives the serial reference path everywhere.
int max_threads();
void set_max_threads(int n);

// Splits [0, n) into a fixed number of contiguous chunks and runs
// fn(chunk_index, begin, end) for each, possibly in parallel. The chunk
// partition depends only on n and chunk_count, never on the thread count, so
// per-chunk partial results reduced in chunk order give bit-identical results
// for any number of threads.
template <typename Fn>
void chunked_for(std::size_t n, std::size_t chunk_count, bool parallel, Fn&& fn) {
  if (n == 0) return;
  chunk_count = std::max<std::size_t>(1, std::min(chunk_count, n));
  const std::size_t base = n / chunk_count, rem = n % chunk_count;
  auto bounds = [&](std::size_t c) {
    std::size_t b = c * base + std::min(c, rem);
    std::size_t e = b + base + (c < rem ? 1 : 0);
    return std::pair<std::size_t, std::size_t>(b, e);
  };
#ifdef _OPENMP
  if (parallel && max_threads() > 1 && chunk_count > 1) {
#pragma omp parallel for schedule(dynamic, 1) num_threads(max_threads())
    for (long long c = 0; c < static_cast<long long>(chunk_count); ++c) {
      auto [b, e] = bounds(static_cast<std::size_t>(c));
      fn(static_cast<std::size_t>(c), b, e);
    }
    return;
  }
#endif
  (void)parallel;
  for (std::size_t c = 0; c < chunk_count; ++c) {
    auto [b, e] = bounds(c);
    fn(c, b, e);
  }
}

// Convenience: parallel element loop with no reduction (each index writes
// disjoint outputs).
template <typename Fn>
void parallel_for(std::size_t n, bool parallel, Fn&& fn) {
  chunked_for(n, parallel ? 4 * static_cast<std::size_t>(max_threads()) : 1,
              parallel, [&](std::size_t, std::size_t b, std::size_t e) {
                for (std::size_t i = b; i < e; ++i) fn(i);
              });
}

double wall_seconds();

}  // namespace ct
