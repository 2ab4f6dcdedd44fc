#pragma once

#include <cstddef>
#include <functional>

namespace raus {

// Thread count from RAUS_THREADS, else hardware concurrency (at least 1).
int default_threads();

// Runs fn(i) for i in [0, n) on up to `threads` workers. Items are claimed
// dynamically; callers write results into per-item slots so the outcome does
// not depend on scheduling. The first exception is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace raus
