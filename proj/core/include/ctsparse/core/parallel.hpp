#pragma once

#include <cstdint>
#include <functional>

namespace ctsparse {

// Worker count: min(hardware threads, CT_SPARSE_THREADS if set), at least 1.
int worker_count();

// Runs f(begin, end) over a partition of [0, n) into contiguous chunks, one
// chunk per worker. Each index is visited exactly once and no two workers
// share an output index, so any map whose writes are indexed by the loop
// variable gives bit-identical results regardless of the worker count.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& f);

}  // namespace ctsparse
