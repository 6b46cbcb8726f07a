#pragma once

#include <cstddef>
#include <functional>

namespace capconf {

// Process-wide worker cap for parallel kernels. 0 = hardware concurrency.
// Outputs never depend on this value; it only controls scheduling.
void set_max_threads(std::size_t n);
std::size_t max_threads();

// Runs fn(begin, end) over disjoint contiguous chunks of [0, n) on up to
// max_threads() workers. Chunk boundaries depend only on n and the worker
// count each worker receives a fixed chunk, so any per-chunk output slot
// is written exactly once; callers must make per-element results
// independent of chunking (the kernels here do, by construction).
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace capconf
