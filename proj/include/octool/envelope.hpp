#ifndef OCTOOL_ENVELOPE_HPP_
#define OCTOOL_ENVELOPE_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "octool/pmp.hpp"
#include "octool/problem.hpp"

namespace octool::envelope {

/// Map pi -> optimal process of the parameterized problem: closed-form
/// callbacks or the shooting solver wrapped with a warm start. The provider
/// must be deterministic per pi and re-entrant.
struct SolutionFamily {
  std::function<Process(const Vec& pi)> provider;
  Vec domain_lo;  // parameter box the provider is trusted on
  Vec domain_hi;

  bool in_domain(const Vec& pi) const;
  Process operator()(const Vec& pi) const { return provider(pi); }
};

/// Warm-started shooting family: every provider call starts from the
/// solution at pi0, so calls are independent and re-entrant.
SolutionFamily make_shooting_family(const BolzaProblem& P, const Vec& pi0, double box_radius,
                                    const pmp::ShootingOptions& opts = {});

/// Optimal value V(pi) = criterion at the family's process.
double value(const BolzaProblem& P, const SolutionFamily& family, const Vec& pi);

/// One-sided directional derivative of the value function, decomposed into
/// its five summands:
///   g0 term        grad_param g0 . dpi
///   g  term        sum_i lambda_i grad_param g^i . dpi
///   h  term        sum_j mu_j grad_param h^j . dpi
///   f0 term        int f0_p . dpi dt
///   f  term        int p(t) . f_p . dpi dt
/// with the normalized multipliers and adjoint at pi0.
struct EnvelopeReport {
  Vec pi0;
  Vec direction;
  double term_g0 = 0.0;
  double term_g = 0.0;
  double term_h = 0.0;
  double term_f0 = 0.0;
  double term_f = 0.0;
  double total = 0.0;  // assembled sum of the five terms
  pmp::Multipliers multipliers;
};

EnvelopeReport envelope_directional(const BolzaProblem& P, const SolutionFamily& family,
                                    const Vec& pi0, const Vec& direction);

/// Gradient assembled from the canonical basis directions, with a linearity
/// cross-check on one deterministic extra direction.
RowVec envelope_gradient(const BolzaProblem& P, const SolutionFamily& family, const Vec& pi0);

struct FdRow {
  double h = 0.0;
  double forward = 0.0;
  double central = 0.0;
  bool ok = false;
  std::string status;
};

struct FdOracle {
  std::vector<FdRow> rows;
  double richardson = 0.0;        // extrapolated forward-difference limit
  double convergence_order = 0.0; // estimated from consecutive forward rows
};

/// Finite-difference oracle for the directional derivative. The forward
/// difference is the faithful probe for the one-sided semantics; the central
/// difference is reported for the fully differentiable case.
FdOracle value_fd_oracle(const BolzaProblem& P, const SolutionFamily& family, const Vec& pi0,
                         const Vec& direction, const std::vector<double>& steps);

/// Differential of F(x) = int f(t, x(t)) dt at x0 in direction hdir:
/// int grad f(t, x0(t)) . hdir(t) dt.
double integral_functional_differential(
    const std::function<double(double, const Vec&)>& f,
    const std::function<RowVec(double, const Vec&)>& grad_f, const PiecewiseFn& x0,
    const PiecewiseFn& hdir);

struct ScanOptions {
  int directions_per_shell = 8;
  std::uint64_t seed = 0x5EED;
  par::ExecPolicy policy = par::ExecPolicy::Parallel;
};

struct ShellSample {
  Vec pi;
  bool ok = false;
  std::string status;
  double deviation = 0.0;
};

struct Shell {
  double radius = 0.0;
  std::vector<ShellSample> samples;
  double max_deviation = 0.0;
  bool ok = false;  // all samples solved
};

struct ContinuityScan {
  Vec pi0;
  std::vector<Shell> shells;     // sorted by decreasing radius
  bool monotone_decreasing = false;

  void finish();  // fills per-shell maxima and the monotone flag
};

/// Multiplier deviations max ||(lambda, mu)(pi_k) - (lambda, mu)(pi0)||_inf
/// on shrinking shells pi_k = pi0 + r (1 + ||pi0||) * random unit direction.
ContinuityScan multiplier_continuity_scan(const BolzaProblem& P, const SolutionFamily& family,
                                          const Vec& pi0, const std::vector<double>& radii,
                                          const ScanOptions& opts = {});

struct AdjointShellSample {
  Vec pi;
  bool ok = false;
  std::string status;
  double sup_distance = 0.0;       // ||p(pi_k) - p(pi0)||_inf
  double terminal_distance = 0.0;  // ||p(pi_k)(T) - p(pi0)(T)||
  double psi_f = 0.0;   // int ||f_x(pi_k) - f_x(pi0)|| dt
  double psi_f0 = 0.0;  // int ||f0_x(pi_k) - f0_x(pi0)|| dt
};

struct AdjointScan {
  Vec pi0;
  std::vector<double> radii;
  std::vector<std::vector<AdjointShellSample>> shells;
  std::vector<double> max_deviation;  // per shell
  bool monotone_decreasing = false;
};

AdjointScan adjoint_continuity_scan(const BolzaProblem& P, const SolutionFamily& family,
                                    const Vec& pi0, const std::vector<double>& radii,
                                    const ScanOptions& opts = {});

struct FrechetReport {
  Vec pi0;
  std::vector<double> radii;
  std::vector<double> gradient_deviation;      // ||grad V(pi_k) - grad V(pi0)||_inf, per shell
  std::vector<double> linearization_residual;  // sup |V(pi_k)-V(pi0)-grad.(pi_k-pi0)| / r
  bool monotone = false;
};

FrechetReport frechet_continuity_check(const BolzaProblem& P, const SolutionFamily& family,
                                       const Vec& pi0, const std::vector<double>& radii,
                                       const ScanOptions& opts = {});

/// Default shell radii (relative): 1e-1 .. 1e-5, geometric.
std::vector<double> default_shell_radii();

}  // namespace octool::envelope

#endif  // OCTOOL_ENVELOPE_HPP_
