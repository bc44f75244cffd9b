#pragma once

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dehaze {

// Static-partition parallel loop. Used only where iterations write disjoint
// outputs, so results do not depend on the thread count.
template <typename F>
inline void parallel_for(std::int64_t n, F&& f) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) f(i);
#else
  for (std::int64_t i = 0; i < n; ++i) f(i);
#endif
}

}  // namespace dehaze
