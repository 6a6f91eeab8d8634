#pragma once

#include <cstddef>
#include <functional>

namespace fadvlp {

// Keeps freed activation buffers in the heap instead of returning them to the
// OS after every step (glibc only; no-op elsewhere). Training allocates the
// same large buffers each step, and re-faulting fresh pages dominated step
// time without this.
void configure_allocator();

// Worker count for query scoring. Defaults to the hardware concurrency.
void set_thread_count(std::size_t threads);
std::size_t thread_count();

// fn(i) for i in [0, n), split into contiguous chunks over thread_count()
// threads. fn must only write state owned by index i.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace fadvlp
