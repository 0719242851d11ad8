#pragma once

#include <cstddef>
#include <functional>

namespace regimeswitch {

// Worker count: REGIMESWITCH_THREADS when set, else the value passed to
// set_thread_count, else the hardware concurrency.
int thread_count();
void set_thread_count(int threads);

// Runs body(i) for i in [0, n). Calls made from inside a worker run serially,
// so nested loops never oversubscribe. Exceptions are rethrown in index order.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace regimeswitch
