#ifndef OCTOOL_ODE_HPP_
#define OCTOOL_ODE_HPP_

#include <functional>
#include <optional>
#include <utility>

#include "octool/piecewise.hpp"
#include "octool/types.hpp"

namespace octool::ode {

struct Options {
  double abs_tol = 1e-12;
  double rel_tol = 1e-12;
  /// Maximum step as a fraction of the horizon; also bounds the dense-output
  /// interpolation error.
  double max_step_fraction = 1.0 / 128.0;
  int max_steps_per_segment = 200000;
  /// Trajectories whose norm exceeds this abort with an IntegrationError.
  double blowup_norm = 1e8;
  /// Optional box guard on the state (component-wise lower/upper).
  std::optional<std::pair<Vec, Vec>> state_guard;
};

/// Right-hand side evaluated per grid segment: the segment index lets the
/// caller route control evaluation to the owning control branch so the RHS
/// stays smooth on each closed segment.
using SegmentRhs = std::function<Vec(std::size_t segment, double t, const Vec& y)>;

using Rhs = std::function<Vec(double t, const Vec& y)>;

/// Dormand-Prince 5(4) with adaptive steps, hard-restarting at every grid
/// breakpoint. Returns the trajectory as a PiecewiseC1Fn on that grid: values
/// are cubic Hermite interpolants of the accepted steps, the extended
/// derivative is the vector field composed with the interpolant.
PiecewiseC1Fn solve_segmented(const SegmentRhs& f, const Vec& y0, const Grid& grid,
                              const Options& opts = {});

/// Same, integrating backward from a terminal value at T down to 0.
PiecewiseC1Fn solve_segmented_backward(const SegmentRhs& f, const Vec& yT, const Grid& grid,
                                       const Options& opts = {});

PiecewiseC1Fn solve(const Rhs& f, const Vec& y0, const Grid& grid, const Options& opts = {});
PiecewiseC1Fn solve_backward(const Rhs& f, const Vec& yT, const Grid& grid,
                             const Options& opts = {});

}  // namespace octool::ode

#endif  // OCTOOL_ODE_HPP_
