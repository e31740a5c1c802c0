#pragma once

#include <cstddef>
#include <functional>

namespace afreeqc {

/// Worker cap: AFREEQC_THREADS when set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
int max_threads();

/// Runs fn(0..count-1) on up to max_threads() threads. The first exception
/// thrown by any task is rethrown after all workers finish.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace afreeqc
