#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace subspace {

/// Run `task(i)` for i in [0, count) on up to `jobs` threads and collect the
/// results indexed by i. Aggregation order is the index order, never the
/// completion order, so output is identical for any job count. The first
/// failing index rethrows after all workers drain.
template <typename Result>
std::vector<Result> run_indexed(std::size_t count, int jobs,
                                const std::function<Result(std::size_t)>& task) {
  std::vector<Result> results(count);
  if (count == 0) return results;
  if (jobs <= 1 || count == 1) {
    for (std::size_t i = 0; i < count; ++i) results[i] = task(i);
    return results;
  }

  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        results[i] = task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };

  const std::size_t thread_count =
      std::min<std::size_t>(static_cast<std::size_t>(jobs), count);
  std::vector<std::thread> threads;
  threads.reserve(thread_count);
  for (std::size_t t = 0; t < thread_count; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();

  for (const auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
  return results;
}

}  // namespace subspace
