#pragma once

#include <cstddef>
#include <functional>

namespace avse {

// Worker cap: AVSE_THREADS if set and positive, else the hardware concurrency.
int worker_count();

// Runs body(i) for i in [0, n) across worker_count() threads. Each index is
// processed exactly once; the first exception thrown is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

// Keeps freed large blocks in the heap instead of returning them to the OS.
// Training allocates and frees the same large buffers every step; without
// this most of the time goes to page faults. No-op outside glibc.
void tune_allocator();

}  // namespace avse
