#include "sentinet/parallel.hpp"

#include <cstdlib>
#include <thread>
#include <vector>

namespace sentinet {

std::size_t thread_cap() {
  const char* env = std::getenv("SENTINET_THREADS");
  if (!env || !*env) return 1;
  long v = std::strtol(env, nullptr, 10);
  if (v <= 1) return 1;
  return static_cast<std::size_t>(v);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
  const std::size_t workers = std::min(thread_cap(), n);
  if (workers <= 1 || n < 2) {
    body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&body, begin, end] { body(begin, end); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace sentinet
