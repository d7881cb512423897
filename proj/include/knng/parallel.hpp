#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace knng {

/// 0 means "use hardware concurrency".
inline std::size_t resolve_workers(std::size_t requested) {
  if (requested != 0) return requested;
  const unsigned hc = std::thread::hardware_concurrency();
  return hc != 0 ? hc : 1;
}

/// Runs f(begin, end, worker) over contiguous chunks of [0, n).
/// workers <= 1 executes inline; joining the spawned threads is the
/// synchronization point between bulk-parallel phases.
template <class F>
void parallel_for(std::size_t n, std::size_t workers, F&& f) {
  if (n == 0) return;
  workers = std::min(resolve_workers(workers), n);
  if (workers <= 1) {
    f(std::size_t{0}, n, std::size_t{0});
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(workers);
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = std::min(w * chunk, n);
    const std::size_t end = std::min(begin + chunk, n);
    threads.emplace_back([&, w, begin, end] {
      try {
        if (begin < end) f(begin, end, w);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace knng
