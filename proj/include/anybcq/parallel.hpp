#pragma once

#include <cstddef>
#include <functional>

namespace anybcq {

// Process-wide cap on worker threads; 0 selects hardware concurrency.
void set_max_threads(std::size_t threads);
std::size_t max_threads();

// Reads ANYBCQ_THREADS and applies it; unset or unparsable leaves the default.
void configure_threads_from_env();

// Splits [0, count) into contiguous chunks and runs fn(begin, end) on each,
// one chunk per worker. Runs inline when a single worker suffices.
void parallel_for(std::size_t count,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace anybcq
