#pragma once

#include <cstddef>
#include <functional>

namespace mlab {

// worker count from MLAB_THREADS, else hardware concurrency
int thread_count();

// fn(begin, end, worker) over [0, n) split into contiguous chunks
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t, int)>& fn);

}  // namespace mlab
