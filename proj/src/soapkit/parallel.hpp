// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>

namespace soapkit {

// Process-wide worker bound. 0 means "use available parallelism", after
// consulting SOAPKIT_THREADS.
void set_thread_count(std::size_t n);
std::size_t thread_count();

// Runs fn(i) for i in [0, n) across at most thread_count() workers. Each index
// runs exactly once; callers write results into per-index slots so output never
// depends on scheduling. The first exception thrown by any task is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace soapkit
