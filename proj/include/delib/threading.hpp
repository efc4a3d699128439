#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace delib {

// Splits [0, n) into at most `threads` contiguous chunks and runs
// fn(worker, begin, end) on each. Chunk boundaries depend only on n and the
// number of workers actually launched; every result must be written to a
// per-index slot so that reductions can later run in index order, which keeps
// numeric output identical for any thread count.
inline void parallel_for_chunks(
    int n, int threads, const std::function<void(int, int, int)>& fn) {
  if (n <= 0) return;
  const int workers = std::max(1, std::min(threads, n));
  if (workers == 1) {
    fn(0, 0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const int base = n / workers, extra = n % workers;
  int begin = 0;
  for (int w = 0; w < workers; ++w) {
    const int len = base + (w < extra ? 1 : 0);
    const int end = begin + len;
    pool.emplace_back([&fn, w, begin, end] { fn(w, begin, end); });
    begin = end;
  }
  for (auto& t : pool) t.join();
}

}  // namespace delib
