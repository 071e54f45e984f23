#ifndef STCOX_SRC_PARALLEL_HPP
#define STCOX_SRC_PARALLEL_HPP

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace stcox::detail {

// Runs fn(i) for i in [0, n) on contiguous blocks; the first exception is rethrown.
template <class F>
void parallel_for(std::size_t n, int threads, F&& fn) {
  const std::size_t nt = static_cast<std::size_t>(std::max(1, threads));
  if (nt == 1 || n < 2 * nt) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(nt);
  for (std::size_t k = 0; k < nt; ++k) {
    const std::size_t lo = n * k / nt, hi = n * (k + 1) / nt;
    pool.emplace_back([&, k, lo, hi] {
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace stcox::detail

#endif  // STCOX_SRC_PARALLEL_HPP
