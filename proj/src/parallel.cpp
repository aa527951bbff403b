#include "anybcq/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace anybcq {

namespace {
std::atomic<std::size_t> g_max_threads{0};
}

void set_max_threads(std::size_t threads) { g_max_threads.store(threads); }

std::size_t max_threads() {
  const std::size_t configured = g_max_threads.load();
  if (configured != 0) return configured;
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void configure_threads_from_env() {
  const char* env = std::getenv("ANYBCQ_THREADS");
  if (env == nullptr || *env == '\0') return;
  try {
    set_max_threads(static_cast<std::size_t>(std::stoul(env)));
  } catch (const std::exception&) {
  }
}

void parallel_for(std::size_t count,
                  const std::function<void(std::size_t, std::size_t)>& fn) {
  if (count == 0) return;
  const std::size_t workers = std::min(max_threads(), count);
  if (workers <= 1) {
    fn(0, count);
    return;
  }
  const std::size_t chunk = (count + workers - 1) / workers;
  std::exception_ptr first_error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t begin = 0; begin < count; begin += chunk) {
      const std::size_t end = std::min(count, begin + chunk);
      pool.emplace_back([&, begin, end] {
        try {
          fn(begin, end);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      });
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace anybcq
