#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace coldrec::cli {

// Training allocates and frees megabyte-sized buffers every step; keeping
// freed memory in the heap avoids trimming and re-faulting it each time.
inline void keep_freed_memory() {
#if defined(__GLIBC__)
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
#endif
}

}  // namespace coldrec::cli
