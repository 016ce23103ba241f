#ifndef OCTOOL_PARALLEL_HPP_
#define OCTOOL_PARALLEL_HPP_

#include <cstddef>
#include <functional>

namespace octool::par {

/// Execution policy for the scan kernels. Serial is the reference path the
/// tests compare against; Parallel dispatches through OpenMP when enabled.
enum class ExecPolicy { Serial, Parallel };

/// Thread cap: OCTOOL_THREADS env var if set (>=1), else the OpenMP default,
/// else 1 for serial builds.
int max_threads();

/// Runs fn(i) for i in [0, n). Every index writes only its own slot, so the
/// two policies produce bitwise-identical results.
void for_each_index(std::size_t n, ExecPolicy policy, const std::function<void(std::size_t)>& fn);

}  // namespace octool::par

#endif  // OCTOOL_PARALLEL_HPP_
