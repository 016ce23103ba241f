#ifndef OCTOOL_PIECEWISE_HPP_
#define OCTOOL_PIECEWISE_HPP_

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "octool/quadrature.hpp"
#include "octool/types.hpp"

namespace octool {

/// Breakpoint subdivision 0 = tau_0 < tau_1 < ... < tau_{k+1} = T.
class Grid {
public:
  Grid(double horizon, std::vector<double> breakpoints);

  /// Two-point grid {0, T}.
  static Grid trivial(double horizon);

  double horizon() const noexcept { return horizon_; }
  const std::vector<double>& breakpoints() const noexcept { return breakpoints_; }
  std::size_t segment_count() const noexcept { return breakpoints_.size() - 1; }

  /// Index i of the segment [tau_i, tau_{i+1}[ containing t (last segment is
  /// closed at T). Throws std::domain_error outside [0, T].
  std::size_t locate(double t) const;

  /// True when t coincides exactly with a stored breakpoint; index returned
  /// through idx.
  bool at_breakpoint(double t, std::size_t& idx) const;

  /// Breakpoints within 1e-12*T of each other collapse to one.
  static double dedup_tolerance(double horizon) { return 1e-12 * horizon; }

private:
  double horizon_;
  std::vector<double> breakpoints_;
};

/// Union of breakpoints of two grids over the same horizon, deduplicated.
Grid merge_grids(const Grid& g1, const Grid& g2);

/// Grid g with extra interior points inserted (deduplicated against g).
Grid refine_grid(const Grid& g, const std::vector<double>& extra_points);

enum class Side { Auto, Left, Right };

enum class Normalization { NormalizedRight, Raw };

/// Piecewise-continuous function on [0, T] with values in R^d. Each segment
/// is a smooth callable on the closure of its interval, which is what makes
/// the one-sided limits at breakpoints exact. Immutable after construction.
class PiecewiseFn {
public:
  using Segment = std::function<Vec(double)>;

  PiecewiseFn(Grid grid, std::vector<Segment> segments, int dim,
              Normalization normalization = Normalization::NormalizedRight);

  static PiecewiseFn constant(double horizon, const Vec& value);
  static PiecewiseFn constant(double horizon, double value);

  /// Single smooth callable on the trivial grid.
  static PiecewiseFn smooth(double horizon, int dim, Segment fn);

  const Grid& grid() const noexcept { return grid_; }
  int dim() const noexcept { return dim_; }
  Normalization normalization() const noexcept { return normalization_; }

  Vec eval(double t, Side side = Side::Auto) const;
  double eval_scalar(double t, Side side = Side::Auto) const { return eval(t, side)[0]; }

  /// One-sided limits cached at construction. right_limit(i) is valid for
  /// i <= k, left_limit(i) for i >= 1 (breakpoint indices).
  const Vec& right_limit(std::size_t i) const { return right_limits_.at(i); }
  const Vec& left_limit(std::size_t i) const { return left_limits_.at(i); }

  /// Evaluates segment i's callable directly (valid on the closed interval).
  Vec eval_segment(std::size_t i, double t) const { return segments_[i](t); }

  /// Same function represented on a finer grid (values unchanged).
  PiecewiseFn with_grid(const Grid& finer) const;

private:
  Grid grid_;
  std::vector<Segment> segments_;
  int dim_;
  Normalization normalization_;
  std::vector<Vec> right_limits_;  // indexed by breakpoint, last unused
  std::vector<Vec> left_limits_;   // indexed by breakpoint, first unused
};

/// Piecewise continuously differentiable function: continuous everywhere,
/// derivative may jump at breakpoints. Segment and derivative callables are
/// both smooth on segment closures.
class PiecewiseC1Fn {
public:
  using Segment = PiecewiseFn::Segment;

  PiecewiseC1Fn(Grid grid, std::vector<Segment> segments, std::vector<Segment> derivatives,
                int dim);

  static PiecewiseC1Fn smooth(double horizon, int dim, Segment fn, Segment dfn);

  const Grid& grid() const noexcept { return values_.grid(); }
  int dim() const noexcept { return values_.dim(); }

  Vec eval(double t) const { return values_.eval(t, Side::Auto); }
  double eval_scalar(double t) const { return values_.eval_scalar(t); }

  const PiecewiseFn& values() const noexcept { return values_; }

  PiecewiseC1Fn with_grid(const Grid& finer) const;

private:
  PiecewiseFn values_;
  std::vector<Segment> derivatives_;

  friend PiecewiseFn extended_derivative(const PiecewiseC1Fn& x);
};

/// d-underbar: the derivative completed with right derivatives at interior
/// breakpoints and 0, the left derivative at T. Always normalized-right.
PiecewiseFn extended_derivative(const PiecewiseC1Fn& x);

/// Riemann integral over [s, t], per-segment adaptive quadrature, never
/// crossing a breakpoint. Throws std::domain_error when s > t or outside
/// [0, T].
Vec integrate(const PiecewiseFn& f, double s, double t,
              const quad::Options& opts = {});

/// sup_t e^{-L t} ||f(t)||, sampled at 64 interior points per segment plus
/// both one-sided breakpoint values. L = 0 gives the sup norm. The sample sup
/// is a lower bound on the true sup.
double bielecki_norm(const PiecewiseFn& f, double weight_rate);

inline double sup_norm(const PiecewiseFn& f) { return bielecki_norm(f, 0.0); }

/// alpha*x + beta*y on the merged grid; segment evaluation is the literal
/// linear combination, so linear identities hold exactly.
PiecewiseFn linear_combination(double alpha, const PiecewiseFn& x, double beta,
                               const PiecewiseFn& y);
PiecewiseC1Fn linear_combination(double alpha, const PiecewiseC1Fn& x, double beta,
                                 const PiecewiseC1Fn& y);

/// sup_t ||f(t) - g(t)|| over dense samples of the merged grid.
double sup_distance(const PiecewiseFn& f, const PiecewiseFn& g);

/// JSON serialization: {"T":..., "breakpoints":[...], "samples":[[t, side,
/// v...], ...]} with 17-significant-digit reals (round-trip exact).
std::string to_json(const PiecewiseFn& f, int samples_per_segment = 8);

}  // namespace octool

#endif  // OCTOOL_PIECEWISE_HPP_
