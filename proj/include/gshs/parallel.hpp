#pragma once

#include <cstddef>
#include <functional>

namespace gshs {

// Runs fn(begin, end) over disjoint contiguous chunks of [0, n), possibly on
// multiple threads. Chunk boundaries depend only on n and chunk_count, never
// on the thread count, so any reduction merged in chunk order is
// bit-reproducible across machines.
void parallel_chunks(std::size_t n, std::size_t chunk_count,
                     const std::function<void(std::size_t chunk_index, std::size_t begin,
                                              std::size_t end)>& fn);

// Convenience: parallel loop over [0, n) where iterations write to disjoint
// locations (no reduction involved).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// Fixed chunk count used for deterministic gradient reductions.
inline constexpr std::size_t kReductionChunks = 16;

}  // namespace gshs
