#pragma once

#include <cstddef>
#include <functional>

namespace rerf {

/// Worker count: the RERF_THREADS environment variable when set to a positive
/// integer, otherwise std::thread::hardware_concurrency().
std::size_t default_thread_count();

/// Runs body(i) for i in [0, count) on up to `threads` workers (0 means
/// default_thread_count()). Callers write results into slot i, so output does
/// not depend on scheduling. The first exception thrown by any task is
/// rethrown after all workers join.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body, std::size_t threads = 0);

}  // namespace rerf
