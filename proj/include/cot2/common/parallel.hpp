#pragma once

#include <cstddef>
#include <functional>

namespace cot2 {

/// Process-wide cap on worker threads (the CLI's --threads). 0 means use the
/// hardware concurrency.
void set_thread_cap(std::size_t threads);
std::size_t thread_cap();

/// Runs body(i) for i in [0, count). Work is split into contiguous blocks;
/// callers must make body(i) independent of execution order. The first
/// exception thrown by any worker is rethrown on the calling thread.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace cot2
