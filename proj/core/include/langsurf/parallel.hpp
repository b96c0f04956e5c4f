#pragma once

#include <cstddef>
#include <functional>

namespace langsurf {

/// Worker count: LANGSURF_THREADS if set and positive, otherwise hardware
/// concurrency (at least 1).
int worker_count();

/// Runs body(i) for i in [0, n) across worker threads. Each index is executed
/// exactly once; callers own any cross-index reduction order.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace langsurf
