#pragma once

#include <cstddef>
#include <functional>

namespace triseg {

/// Worker cap from TRISEG_THREADS, else hardware concurrency (at least 1).
std::size_t worker_count();

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Exceptions from
/// workers are rethrown on the calling thread (first by index).
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace triseg
