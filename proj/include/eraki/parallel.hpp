#pragma once

#include <cstddef>
#include <functional>

namespace eraki {

// Worker count used by parallel_for. Defaults to ERAKI_THREADS from the
// environment, else 1.
unsigned thread_count();
void set_thread_count(unsigned n);

// Splits [0, n) into contiguous chunks, one per worker. Each index must write
// only its own outputs, which keeps results independent of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace eraki
