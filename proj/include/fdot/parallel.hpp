#pragma once

#include <algorithm>
#include <thread>
#include <vector>

namespace fdot {

// Runs fn(i) for i in [0, count) on up to `threads` workers using contiguous
// chunks. Each index is handled by exactly one worker, so results written to
// per-index slots do not depend on the worker count.
template <class Fn>
void parallel_for(int count, int threads, Fn&& fn) {
  const int workers = std::clamp(threads, 1, std::max(count, 1));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    const int begin = count * w / workers;
    const int end = count * (w + 1) / workers;
    pool.emplace_back([begin, end, &fn] {
      for (int i = begin; i < end; ++i) fn(i);
    });
  }
}

}  // namespace fdot
