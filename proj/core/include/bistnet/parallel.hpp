#pragma once

#include <cstddef>
#include <functional>

namespace bistnet {

// Worker cap from BISTREAM_THREADS, else the hardware concurrency. Always >= 1.
std::size_t worker_count();
// True when BISTREAM_THREADS=1.
bool single_threaded_env();

// Runs fn(i) for i in [0, n). Each index runs exactly once; callers write only
// to per-index slots so results do not depend on scheduling. The first
// exception thrown by any task is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace bistnet
