#pragma once

#include <cstdlib>
#include <functional>

#ifdef ISCPT_HAVE_OPENMP
#include <omp.h>
#endif

namespace iscpt {

// OpenMP-backed loop runner with a serial path kept for reference checks.
// The serial path runs the same body in index order; kernels written against
// parallel_for must therefore be independent per index. ISCPT_SERIAL=1 in the
// environment (or set_parallel_enabled(false)) forces the serial path.
inline bool& parallel_enabled_flag() {
  static bool enabled = [] {
    const char* env = std::getenv("ISCPT_SERIAL");
    return !(env && env[0] == '1');
  }();
  return enabled;
}

inline void set_parallel_enabled(bool enabled) { parallel_enabled_flag() = enabled; }
inline bool parallel_enabled() { return parallel_enabled_flag(); }

inline int hardware_threads() {
#ifdef ISCPT_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

template <typename Fn>
void serial_for(long n, Fn&& fn) {
  for (long i = 0; i < n; ++i) fn(i);
}

template <typename Fn>
void parallel_for(long n, Fn&& fn) {
#ifdef ISCPT_HAVE_OPENMP
  if (parallel_enabled()) {
#pragma omp parallel for schedule(dynamic, 1)
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
#endif
  serial_for(n, fn);
}

}  // namespace iscpt
