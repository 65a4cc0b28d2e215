#pragma once

// Deterministic chunked parallel-for: work is split into fixed-size chunks,
// each processed sequentially by one worker, so per-chunk results can be
// reduced in chunk order independent of scheduling and thread count.

#include <functional>

namespace qf::par {

inline constexpr long kChunkSize = 32;

long n_chunks(long n_items);

// fn(chunk_index, begin, end) over [0, n_items); threads = 0 picks the
// hardware concurrency, threads = 1 runs inline
void for_chunks(long n_items, int threads,
                const std::function<void(long, long, long)>& fn);

}  // namespace qf::par
