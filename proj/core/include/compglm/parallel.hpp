#pragma once

#include <cstddef>
#include <functional>

namespace compglm {

/// Number of worker threads to use when the caller passes 0: the
/// COMPGLM_THREADS environment variable if set, else hardware concurrency.
int default_thread_count();

/// Calls `body(i)` for i in [0, count) on up to `threads` workers. Each index
/// is visited exactly once; results must be written to per-index slots so the
/// outcome does not depend on scheduling. The first exception thrown by a body
/// is rethrown after all workers join.
void parallel_for(std::size_t count, int threads,
                  const std::function<void(std::size_t)>& body);

}  // namespace compglm
