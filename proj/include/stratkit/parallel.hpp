#pragma once

#include <cstddef>
#include <functional>

namespace stratkit {

/// Worker count: `requested` if nonzero, else STRATKIT_THREADS, else the
/// hardware concurrency (at least 1).
unsigned resolve_threads(unsigned requested = 0);

/// Calls task(i) for i in [0, count) on up to `threads` workers. Tasks must
/// write to disjoint state; the first exception thrown is rethrown here.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& task);

}  // namespace stratkit
