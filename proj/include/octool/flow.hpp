#ifndef OCTOOL_FLOW_HPP_
#define OCTOOL_FLOW_HPP_

#include <atomic>
#include <string>
#include <vector>

#include "octool/ode.hpp"
#include "octool/parallel.hpp"
#include "octool/piecewise.hpp"
#include "octool/problem.hpp"
#include "octool/types.hpp"

namespace octool::flow {

struct Spike {
  double time;
  Vec value;
};

/// Ordered spike list ((t_i, v_i)) with 0 < t_1 <= ... <= t_N < T. Ties are
/// kept in list order; times closer than the grid dedup tolerance count as
/// equal for the stacking rule.
class SpikeList {
public:
  SpikeList(std::vector<Spike> spikes, double horizon);

  const std::vector<Spike>& spikes() const noexcept { return spikes_; }
  std::size_t size() const noexcept { return spikes_.size(); }
  double horizon() const noexcept { return horizon_; }

  /// Minimum positive gap between distinct spike times; +inf when there is
  /// none (single spike or all times equal).
  double min_gap() const noexcept { return min_gap_; }

  bool times_equal(std::size_t i, std::size_t j) const;

private:
  std::vector<Spike> spikes_;
  double horizon_;
  double min_gap_;
};

struct NeedleInterval {
  double start;
  double end;  // half-open [start, end[
  bool empty;  // width below the dedup tolerance counts as zero amplitude
};

/// Spike list plus nonnegative amplitudes a with ||a||_1 <= min_gap. Interval
/// i starts at t_i shifted by the stacked amplitudes of earlier spikes at the
/// same time.
class NeedleVariation {
public:
  NeedleVariation(SpikeList spikes, Vec amplitudes);

  const SpikeList& spikes() const noexcept { return spikes_; }
  const Vec& amplitudes() const noexcept { return amplitudes_; }
  double total_amplitude() const { return amplitudes_.lpNorm<1>(); }

  double stack_offset(std::size_t i) const { return offsets_[i]; }
  const NeedleInterval& interval(std::size_t i) const { return intervals_[i]; }
  const std::vector<NeedleInterval>& intervals() const noexcept { return intervals_; }

private:
  SpikeList spikes_;
  Vec amplitudes_;
  std::vector<double> offsets_;
  std::vector<NeedleInterval> intervals_;
};

/// u_a: equals v_i on interval i, u0 elsewhere; normalized-right. Zero
/// amplitudes return u0 unchanged.
PiecewiseFn needle_control(const PiecewiseFn& u0, const NeedleVariation& nv);

/// Forward Cauchy problem dx = f(t, x, u(t), pi), x(0) = xi0, restarting at
/// every breakpoint of u. The trajectory's grid is u's grid.
PiecewiseC1Fn integrate_cauchy(const BolzaProblem& P, const PiecewiseFn& u, const Vec& pi,
                               const ode::Options& opts = {});

/// Picard map x -> [t -> xi0 + int_0^t f(s, x(s), u(s), pi) ds]. Fixed points
/// solve the Cauchy problem.
PiecewiseC1Fn picard_operator(const BolzaProblem& P, const PiecewiseC1Fn& x,
                              const PiecewiseFn& u, const Vec& pi,
                              const ode::Options& opts = {});

/// State-transition matrices of the dynamics linearized along a reference
/// process: columns of R(., s) solve dy = f_x(t, x0, u0, pi) y. Built once
/// from the fundamental solution Y (Y(0) = I); R(t, s) = Y(t) Y(s)^{-1}.
class Resolvent {
public:
  Resolvent(const BolzaProblem& P, const Process& proc, const ode::Options& opts = {});

  int dim() const noexcept { return dim_; }
  double horizon() const noexcept { return horizon_; }

  /// R(t, s); R(t, t) is the identity exactly.
  Mat operator()(double t, double s) const;

  Mat from_terminal(double s) const { return (*this)(horizon_, s); }

  /// R(T, s) tabulated at the fundamental solution's own nodes.
  const std::vector<std::pair<double, Mat>>& terminal_cache() const noexcept {
    return terminal_cache_;
  }

  /// Worst condition number met while inverting Y(s); above 1e12 the
  /// inversion is flagged.
  double worst_condition() const;
  long condition_warnings() const;

private:
  Mat fundamental_at(double t) const;

  int dim_;
  double horizon_;
  PiecewiseC1Fn fundamental_;  // vectorized column-major Y(t)
  std::vector<std::pair<double, Mat>> terminal_cache_;
  mutable std::atomic<double> worst_condition_{1.0};
  mutable std::atomic<long> condition_warnings_{0};
};

Resolvent resolvent_build(const BolzaProblem& P, const Process& proc,
                          const ode::Options& opts = {});

/// z_a by variation of constants: z_a(t) = Y(t) int_0^t Y(s)^{-1} D_a(s) ds
/// with D_a the needle mismatch supported on the needle intervals.
PiecewiseC1Fn linearized_inhomogeneous(const BolzaProblem& P, const Process& proc,
                                       const NeedleVariation& nv);

/// Same z_a by direct integration of the inhomogeneous linear ODE; kept as
/// the independent route for cross-checking the variation-of-constants path.
PiecewiseC1Fn linearized_inhomogeneous_direct(const BolzaProblem& P, const Process& proc,
                                              const NeedleVariation& nv,
                                              const ode::Options& opts = {});

/// First-order terminal map: column i is
/// R(T, t_i) [f(t_i, x0(t_i), v_i, pi) - f(t_i, x0(t_i), u0(t_i), pi)].
Mat first_order_map(const BolzaProblem& P, const Process& proc, const SpikeList& S,
                    const Resolvent& R);
Mat first_order_map(const BolzaProblem& P, const Process& proc, const SpikeList& S);

struct ResidualStudyRow {
  double amplitude_l1 = 0.0;
  double residual_norm = 0.0;  // ||x_a(T) - x0(T) - L a|| / ||a||_1
  double gronwall_ratio = 0.0; // ||x_a - x0||_inf / ||a||_1
  bool ok = false;
  std::string status;
};

/// Evaluates the first-order expansion residual for each amplitude vector.
/// Rows are independent trajectories; the kernel runs one per task under the
/// Parallel policy, with identical results under Serial.
std::vector<ResidualStudyRow> expansion_residual_study(
    const BolzaProblem& P, const Process& proc, const SpikeList& S,
    const std::vector<Vec>& amplitudes, par::ExecPolicy policy = par::ExecPolicy::Parallel);

/// CSV with header norm_a1,residual_norm,gronwall_ratio,status; deterministic
/// row order.
std::string residual_study_csv(const std::vector<ResidualStudyRow>& rows);

/// Largest c <= 1 (by halving) such that integrating the needle control with
/// amplitudes c * a succeeds; the feasibility radius is only known to exist,
/// so it is probed.
double discover_amplitude_guard(const BolzaProblem& P, const Process& proc, const SpikeList& S,
                                const Vec& amplitudes, int max_halvings = 40);

}  // namespace octool::flow

#endif  // OCTOOL_FLOW_HPP_
