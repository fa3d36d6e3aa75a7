#ifndef ECL2O_PARALLEL_HPP
#define ECL2O_PARALLEL_HPP

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace ecl2o {

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Each index is visited exactly once,
/// so callers that write only to slot i get results independent of the thread count.
/// The first exception (lowest index) is rethrown after all workers join.
template <typename Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn&& fn) {
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(n)));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (unsigned j = 0; j < jobs; ++j) {
    pool.emplace_back([&, j] {
      for (std::size_t i = j; i < n; i += jobs) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace ecl2o

#endif  // ECL2O_PARALLEL_HPP
