#include "bistnet/parallel.hpp"

#include <atomic>
#include <charconv>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "bistnet/error.hpp"

namespace bistnet {

namespace {

std::size_t env_threads() {
  const char* raw = std::getenv("BISTREAM_THREADS");
  if (!raw || !*raw) return 0;
  std::size_t value = 0;
  const char* end = raw + std::strlen(raw);
  auto [ptr, ec] = std::from_chars(raw, end, value);
  if (ec != std::errc() || ptr != end || value == 0) {
    throw ConfigError(std::string("BISTREAM_THREADS must be a positive integer, got '") + raw + "'");
  }
  return value;
}

}  // namespace

std::size_t worker_count() {
  if (const std::size_t n = env_threads()) return n;
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

bool single_threaded_env() { return env_threads() == 1; }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto run = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < workers; ++k) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace bistnet
