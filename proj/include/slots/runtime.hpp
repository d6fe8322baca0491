#pragma once

// Process-level tuning for training workloads.

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace slots {

/// Keeps large tensor buffers on the heap instead of fresh mmap pages, which
/// otherwise fault in on every forward pass. Call once at startup; no-op off glibc.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace slots
