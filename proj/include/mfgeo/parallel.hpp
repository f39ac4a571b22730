#pragma once

#include <cstddef>
#include <functional>

namespace mfgeo {

// Worker count used by parallel_for. Initialized from MFGEO_THREADS when set,
// otherwise from the hardware concurrency.
int thread_count();
void set_thread_count(int n);

// Runs body(begin, end) over contiguous chunks of [0, n). Bodies must write
// disjoint outputs; results never depend on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace mfgeo
