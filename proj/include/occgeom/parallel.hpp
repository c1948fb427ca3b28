#pragma once

#include <cstddef>
#include <functional>

namespace occgeom {

/// Worker count: OCCGEOM_THREADS if set and positive, else the hardware
/// concurrency (at least 1).
std::size_t worker_count();

/// Calls body(begin, end) over a fixed partition of [0, n) into `chunks`
/// contiguous ranges. The partition does not depend on the worker count, so
/// callers that reduce per-chunk results in chunk order are deterministic.
void parallel_chunks(std::size_t n, std::size_t chunks,
                     const std::function<void(std::size_t chunk, std::size_t begin, std::size_t end)>& body);

/// Convenience wrapper for loops whose iterations write disjoint outputs.
void parallel_for(std::size_t n, const std::function<void(std::size_t i)>& body);

}  // namespace occgeom
