#pragma once

#include <cstddef>
#include <functional>

namespace eigenscope {

/// Worker count used by `parallel_for`: the value set by `set_thread_count`,
/// else EIGENSCOPE_THREADS, else the number of logical cores.
std::size_t thread_count();
/// 0 restores the default resolution.
void set_thread_count(std::size_t n);

/// Runs body(i) for i in [0, count). Tasks are handed out in contiguous
/// blocks; callers write results into per-index slots and reduce afterwards
/// in index order, which keeps results independent of the worker count.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace eigenscope
