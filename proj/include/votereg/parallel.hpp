#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace votereg {

// Shared worker pool for index-addressed task fans. Each task writes results
// into its own pre-allocated slot, so reductions happen in index order and the
// output is identical for any worker count. A null pool means "run serially";
// modules take a `WorkerPool*` instead of spawning threads themselves.
class WorkerPool {
 public:
  explicit WorkerPool(unsigned workers) : workers_(workers == 0 ? 1 : workers) {}

  unsigned workers() const { return workers_; }

  // Runs task(0..count-1); tasks must not touch shared mutable state except
  // their own slot. The first thrown exception is rethrown on the caller.
  void parallel_for(std::size_t count, const std::function<void(std::size_t)>& task) const {
    if (count == 0) return;
    const unsigned n_threads = static_cast<unsigned>(
        std::min<std::size_t>(workers_, count));
    if (n_threads <= 1) {
      for (std::size_t i = 0; i < count; ++i) task(i);
      return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          task(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> threads;
    threads.reserve(n_threads);
    for (unsigned t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
  }

  static void run(const WorkerPool* pool, std::size_t count,
                  const std::function<void(std::size_t)>& task) {
    if (pool != nullptr) {
      pool->parallel_for(count, task);
    } else {
      for (std::size_t i = 0; i < count; ++i) task(i);
    }
  }

 private:
  unsigned workers_;
};

}  // namespace votereg
