#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include <omp.h>

namespace sfn {

/// Worker count for parallel regions; <= 0 restores the OpenMP default.
void set_thread_count(int n);
int thread_count();

/// Runs f(i) for i in [0, n) across workers. Iterations must write disjoint outputs.
template <typename F>
void parallel_for(std::size_t n, F&& f) {
#pragma omp parallel for schedule(dynamic, 1) num_threads(thread_count())
  for (std::size_t i = 0; i < n; ++i) f(i);
}

/// Fixed-size chunking so reductions can be merged in index order regardless of workers.
struct Chunks {
  std::size_t total;
  std::size_t chunk;
  std::size_t count() const { return chunk == 0 ? 0 : (total + chunk - 1) / chunk; }
  std::size_t begin(std::size_t c) const { return c * chunk; }
  std::size_t end(std::size_t c) const { return std::min(total, (c + 1) * chunk); }
};

/// Pairwise in-place reduction of per-chunk partials, fixed tree independent of workers.
template <typename T, typename Add>
T tree_reduce(std::vector<T>& parts, Add&& add) {
  if (parts.empty()) return T{};
  for (std::size_t stride = 1; stride < parts.size(); stride *= 2)
    for (std::size_t i = 0; i + stride < parts.size(); i += 2 * stride) add(parts[i], parts[i + stride]);
  return std::move(parts[0]);
}

}  // namespace sfn
