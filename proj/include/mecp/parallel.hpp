#pragma once

#include <cstddef>
#include <functional>

namespace mecp {

/// Worker count: MECP_WORKERS when set, otherwise `requested`, otherwise hardware concurrency.
unsigned resolve_workers(unsigned requested = 0);

/// Calls body(i) for i in [0, count) on up to `workers` threads. Each index runs exactly once;
/// the first exception thrown by any body is rethrown after all workers join.
void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& body);

}  // namespace mecp
