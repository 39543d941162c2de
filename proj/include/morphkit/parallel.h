#pragma once

#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace morphkit {

// Runs fn(i) for i in [0, n) on up to `workers` threads using a static
// strided partition. The first exception thrown by any task is rethrown.
template <typename Fn>
void parallel_for(size_t n, size_t workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const size_t nthreads = workers < n ? workers : n;
  std::vector<std::exception_ptr> errors(nthreads);
  std::vector<std::thread> threads;
  threads.reserve(nthreads);
  for (size_t w = 0; w < nthreads; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (size_t i = w; i < n; i += nthreads) fn(i);
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

}  // namespace morphkit
