#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace ctd4 {

// The MLP passes allocate and free many same-sized blocks above glibc's
// default mmap threshold; keeping them on the heap avoids a page-fault storm.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
}

}  // namespace ctd4
