#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <utility>
#include <vector>

namespace carpetmf {

// Leaf size used by every deterministic reduction. Fixing it (rather than
// deriving it from the worker count) keeps results bit-identical for any
// number of workers.
inline constexpr std::uint64_t kReductionLeaf = 256;

// Runs task(i) for i in [0, count) on up to `workers` threads.
// Exceptions are rethrown on the calling thread (first one wins).
template <class Task>
void parallel_for(std::uint64_t count, unsigned workers, Task&& task) {
  workers = std::max(1u, workers);
  if (workers == 1 || count <= 1) {
    for (std::uint64_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::uint64_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto body = [&] {
    for (;;) {
      const std::uint64_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(count);
        return;
      }
    }
  };
  const unsigned spawned =
      static_cast<unsigned>(std::min<std::uint64_t>(workers, count));
  std::vector<std::thread> pool;
  pool.reserve(spawned - 1);
  for (unsigned t = 1; t < spawned; ++t) pool.emplace_back(body);
  body();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

// Reduction over [0, count): contiguous leaves of kReductionLeaf indices are
// folded by leaf(begin, end) -> Acc, then combined by merge(Acc, Acc) -> Acc
// along a fixed binary tree.
template <class Acc, class Leaf, class Merge>
Acc tree_reduce(std::uint64_t count, unsigned workers, Leaf&& leaf,
                Merge&& merge) {
  const std::uint64_t leaves =
      count == 0 ? 1 : (count + kReductionLeaf - 1) / kReductionLeaf;
  std::vector<Acc> level(leaves);
  parallel_for(leaves, workers, [&](std::uint64_t i) {
    const std::uint64_t begin = i * kReductionLeaf;
    const std::uint64_t end = std::min(count, begin + kReductionLeaf);
    level[i] = leaf(begin, end);
  });
  while (level.size() > 1) {
    std::vector<Acc> up((level.size() + 1) / 2);
    for (std::size_t i = 0; i < up.size(); ++i) {
      up[i] = 2 * i + 1 < level.size() ? merge(level[2 * i], level[2 * i + 1])
                                       : std::move(level[2 * i]);
    }
    level = std::move(up);
  }
  return std::move(level.front());
}

}  // namespace carpetmf
