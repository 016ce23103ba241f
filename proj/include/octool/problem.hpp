#ifndef OCTOOL_PROBLEM_HPP_
#define OCTOOL_PROBLEM_HPP_

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "octool/piecewise.hpp"
#include "octool/types.hpp"

namespace octool {

/// Admissible control set: component-wise box, or an open-set marker when no
/// bounds are given (U is then treated as all of R^mu near the candidate).
struct ControlBox {
  std::optional<Vec> lower;
  std::optional<Vec> upper;

  bool is_box() const { return lower.has_value() && upper.has_value(); }
  Vec center(int control_dim) const;
  Vec clamp(const Vec& zeta) const;
  bool contains(const Vec& zeta, double tol = 0.0) const;
};

enum class DerivMode { Analytic, DualAd, CentralFd };

/// Terminal-time scalar function phi(xi, pi) with its two gradients.
struct TerminalFn {
  std::function<double(const Vec& xi, const Vec& pi)> value;
  std::function<RowVec(const Vec& xi, const Vec& pi)> grad_state;
  std::function<RowVec(const Vec& xi, const Vec& pi)> grad_param;
};

/// Parameterized Bolza problem
///
///   maximize  int_0^T f0(t, x, u, pi) dt + g[0](x(T), pi)
///   s.t.      dx = f(t, x, u, pi),  x(0) = xi0,
///             g[alpha](x(T), pi) >= 0  (alpha = 1..m),
///             h[beta](x(T), pi) = 0    (beta = 1..q).
///
/// Maximization is the fixed convention; minimizers flip the signs of f0 and
/// g[0]. Immutable after finalize(); all callbacks must be re-entrant.
struct BolzaProblem {
  std::string name;
  int state_dim = 1;
  int control_dim = 1;
  int param_dim = 0;
  double horizon = 1.0;
  Vec initial_state;

  std::function<double(double, const Vec&, const Vec&, const Vec&)> f0;
  std::function<Vec(double, const Vec&, const Vec&, const Vec&)> f;
  std::vector<TerminalFn> g;  // g[0] is the terminal reward; g[1..m] inequalities
  std::vector<TerminalFn> h;  // equalities

  // Differentials of f0 and f with respect to state / control / parameter,
  // plus optional time partials (needed only for the Hamiltonian-slope check).
  std::function<RowVec(double, const Vec&, const Vec&, const Vec&)> f0_x, f0_u, f0_p;
  std::function<Mat(double, const Vec&, const Vec&, const Vec&)> f_x, f_u, f_p;
  std::function<double(double, const Vec&, const Vec&, const Vec&)> f0_t;
  std::function<Vec(double, const Vec&, const Vec&, const Vec&)> f_t;

  ControlBox control_box;
  DerivMode deriv_mode = DerivMode::Analytic;
  std::optional<std::pair<Vec, Vec>> state_guard;

  /// Optional closed-form maximizer of the Hamiltonian in the control slot,
  /// (t, xi, p, pi) -> zeta with lambda0 = 1. Used by the shooting solver.
  std::function<Vec(double, const Vec&, const Vec&, const Vec&)> control_from_adjoint;

  double feasibility_tol = 1e-8;

  int inequality_count() const { return static_cast<int>(g.size()) - 1; }
  int equality_count() const { return static_cast<int>(h.size()); }
  bool has_time_partials() const { return static_cast<bool>(f0_t) && static_cast<bool>(f_t); }

  /// Synthesizes missing differentials by central finite differences when
  /// deriv_mode != Analytic, then probes every callback once at
  /// (0, xi0, center(U), 0) and rejects dimension mismatches.
  void finalize();

  /// Central-FD fallback (step 1e-6 * (1 + ||arg||)) for absent callbacks.
  void synthesize_missing_derivatives();
};

struct Process {
  PiecewiseC1Fn x;
  PiecewiseFn u;
  Vec pi;
};

struct FeasibilityReport {
  double dynamics_residual = 0.0;
  double initial_error = 0.0;
  Vec inequality_slack;   // g[alpha](x(T), pi), alpha = 1..m
  Vec equality_violation; // |h[beta](x(T), pi)|
  double tolerance = 1e-8;

  bool feasible() const;
  double worst() const;
};

FeasibilityReport validate_process(const BolzaProblem& P, const Process& proc, double tol);

/// int f0 dt + g0(x(T), pi), per-segment quadrature on the merged grid.
double criterion(const BolzaProblem& P, const Process& proc);

/// Mayer lift: state (sigma, xi) with sigma accumulating the running reward,
/// F = (f0, f), G0 = sigma + g0, remaining terminal functions unchanged in
/// the xi block, zero running reward.
BolzaProblem augment_to_mayer(const BolzaProblem& P);

/// Lifts a process of P to the augmented problem (prepends sigma(t)).
Process lift_process(const BolzaProblem& P, const Process& proc);

struct Hamiltonian {
  const BolzaProblem* problem;
  double lambda0 = 1.0;
};

/// lambda0 * f0 + p . f  (bilinear in (lambda0, p)).
double hamiltonian_eval(const Hamiltonian& H, double t, const Vec& xi, const Vec& zeta,
                        const Vec& p, const Vec& pi);

}  // namespace octool

#endif  // OCTOOL_PROBLEM_HPP_
