#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace corrmem {

/// Worker count; 0 means "use the hardware concurrency".
struct Workers {
  unsigned count = 1;

  unsigned resolved() const {
    if (count != 0) return count;
    return std::max(1u, std::thread::hardware_concurrency());
  }
};

/// Splits [0, total) into `workers` contiguous chunks and calls
/// fn(begin, end, chunk) for each, chunk 0 on the calling thread. Callers keep
/// one accumulator per chunk and merge them in chunk order, so the merged
/// result is independent of the worker count as long as the merge is exact
/// (integer counts, or per-index output slots).
template <class Fn>
void for_each_chunk(std::size_t total, Workers workers, Fn&& fn) {
  const std::size_t chunks =
      std::max<std::size_t>(1, std::min<std::size_t>(workers.resolved(), total));
  auto bounds = [&](std::size_t c) { return total * c / chunks; };
  if (chunks == 1) {
    fn(std::size_t{0}, total, std::size_t{0});
    return;
  }
  std::vector<std::exception_ptr> errors(chunks);
  std::vector<std::thread> pool;
  pool.reserve(chunks - 1);
  for (std::size_t c = 1; c < chunks; ++c) {
    pool.emplace_back([&, c] {
      try {
        fn(bounds(c), bounds(c + 1), c);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    });
  }
  try {
    fn(bounds(0), bounds(1), std::size_t{0});
  } catch (...) {
    errors[0] = std::current_exception();
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Number of chunks for_each_chunk will use; size per-chunk accumulators with it.
inline std::size_t chunk_count(std::size_t total, Workers workers) {
  return std::max<std::size_t>(1, std::min<std::size_t>(workers.resolved(), total));
}

}  // namespace corrmem
