#pragma once
// Deterministic chunked parallelism: a range is cut at fixed boundaries
// independent of the thread count, per-chunk results are folded in chunk
// order, so outputs are identical for any --threads value.

#include <atomic>
#include <cstdint>
#include <thread>
#include <utility>
#include <vector>

namespace conecount::detail {

inline constexpr int64_t kQChunk = int64_t{1} << 22;

template <typename Result, typename Work, typename Merge>
Result run_chunked(int64_t lo, int64_t hi, int threads, Work&& work, Merge&& merge) {
  std::vector<std::pair<int64_t, int64_t>> chunks;
  for (int64_t a = lo; a <= hi; a += kQChunk)
    chunks.emplace_back(a, std::min(hi, a + kQChunk - 1));
  Result total{};
  if (threads <= 1 || chunks.size() <= 1) {
    for (auto [a, b] : chunks) {
      Result r = work(a, b);
      merge(total, std::move(r));
    }
    return total;
  }
  std::vector<Result> parts(chunks.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= chunks.size()) return;
      parts[i] = work(chunks[i].first, chunks[i].second);
    }
  };
  std::vector<std::thread> pool;
  int nts = std::min<int>(threads, static_cast<int>(chunks.size()));
  pool.reserve(nts);
  for (int i = 0; i < nts; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& p : parts) merge(total, std::move(p));
  return total;
}

}  // namespace conecount::detail
