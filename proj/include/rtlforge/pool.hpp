#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace rtlforge {

// Runs fn(0..n-1) on up to `width` threads. Items not yet started are skipped
// once `cancel` is set; items in flight finish. The first exception is
// rethrown after every worker has stopped. width <= 1 runs inline, in order.
inline void parallel_for(std::size_t n, int width, const std::function<void(std::size_t)>& fn,
                         const std::atomic<bool>* cancel = nullptr) {
  auto cancelled = [&] { return cancel && cancel->load(); };
  if (width <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n && !cancelled(); ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      if (cancelled()) return;
      {
        std::lock_guard lock(error_mutex);
        if (first_error) return;
      }
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  const auto count = std::min<std::size_t>(static_cast<std::size_t>(width), n);
  threads.reserve(count);
  for (std::size_t t = 0; t < count; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace rtlforge
