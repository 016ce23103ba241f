#include "octool/parallel.hpp"

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace octool::par {

int max_threads() {
  if (const char* env = std::getenv("OCTOOL_THREADS")) {
    try {
      int v = std::stoi(env);
      if (v >= 1) return v;
    } catch (...) {
      // fall through to the default below
    }
  }
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void for_each_index(std::size_t n, ExecPolicy policy, const std::function<void(std::size_t)>& fn) {
  if (policy == ExecPolicy::Serial || max_threads() == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
#ifdef _OPENMP
  const int nt = max_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    fn(static_cast<std::size_t>(i));
  }
#else
  for (std::size_t i = 0; i < n; ++i) fn(i);
#endif
}

}  // namespace octool::par
