#ifndef OCTOOL_PMP_HPP_
#define OCTOOL_PMP_HPP_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "octool/flow.hpp"
#include "octool/parallel.hpp"
#include "octool/problem.hpp"

namespace octool::pmp {

/// Multipliers (lambda_0..lambda_m, mu_1..mu_q). `normalized` is true when
/// the rank route succeeded and lambda[0] == 1; otherwise the vector carries
/// the l1-sphere normalization with the first nonzero entry positive.
struct Multipliers {
  Vec lambda;  // size m+1, lambda[0] first
  Vec mu;      // size q
  bool normalized = true;
};

struct AdjointPath {
  PiecewiseC1Fn p;
  Vec terminal;  // p(T)
};

enum class Verdict { Pass, Fail, NotChecked };

struct ConditionResult {
  double residual = 0.0;
  double tolerance = 0.0;
  Verdict verdict = Verdict::NotChecked;
  std::string detail;
};

enum class QualificationMode { QC0, QC1, LI };

struct QualificationReport {
  QualificationMode mode;
  bool passed = false;
  Vec singular_values;       // of the tested family
  double sigma_min = 0.0;
  std::vector<int> active_inequalities;  // indices alpha with g^alpha active
  bool needs_interior_control = false;   // rank route requires U open or box interior
  std::string detail;
};

struct VerifyOptions {
  double tol = 1e-6;
  /// Grid density per control dimension for the maximization check (box
  /// case), plus multistart ascent count.
  int control_grid = 64;
  int ascent_starts = 8;
  int time_samples_per_segment = 24;
  bool check_hamiltonian_slope = true;  // needs time partials
  double active_set_tol = 1e-7;
  par::ExecPolicy policy = par::ExecPolicy::Parallel;
};

struct PMPCertificate {
  Multipliers multipliers;
  std::optional<AdjointPath> adjoint;
  std::map<std::string, ConditionResult> conditions;  // NN Si Sl TC AE MP CH dH
  std::vector<QualificationReport> qualification;
  VerifyOptions options;
  bool degenerate = false;

  bool all_passed() const;
  bool any_failed() const;
};

/// Backward integration of dp = -lambda0 f0_x^T - f_x^T p from p(T) = pT,
/// restarting at every breakpoint; linear in (lambda0, pT).
AdjointPath adjoint_backward(const BolzaProblem& P, const Process& proc, double lambda0,
                             const Vec& pT, const ode::Options& opts = {});

/// Multipliers with lambda0 = 1 via the composed terminal-gradient family at
/// T: solves sum_i lambda_i e_i + sum_j mu_j e_{m+j} = rhs in the
/// least-squares sense, where e_alpha composes the terminal gradients with
/// the control Jacobian of the dynamics. Throws RankDeficiencyError when the
/// family is numerically rank deficient and std::domain_error when a sign
/// condition fails or the residual is large.
Multipliers solve_multipliers(const BolzaProblem& P, const Process& proc, double tol = 1e-6);

/// Fallback when the rank route fails: minimizes the stationarity residual
/// over the l1 sphere (smallest singular vector), sign fixed by making the
/// first nonzero multiplier positive. normalized == false in the result.
Multipliers solve_multipliers_sphere(const BolzaProblem& P, const Process& proc);

QualificationReport check_qualification(const BolzaProblem& P, const Process& proc,
                                        QualificationMode mode, double active_set_tol = 1e-7);

/// Rank of the control Jacobian of f along a time grid; reports candidate
/// times where it is surjective. A scan, not an exhaustive search.
std::vector<double> control_surjectivity_scan(const BolzaProblem& P, const Process& proc,
                                              int grid_points = 128);

/// Full certificate: nonnullity, signs, slackness, transversality, adjoint
/// collocation residual, pointwise maximization (grid + multistart ascent,
/// reported as "no counterexample found"), Hamiltonian continuity across
/// breakpoints, and optionally the Hamiltonian slope identity for problems
/// with time partials. Failures are verdicts, never exceptions.
PMPCertificate verify_certificate(const BolzaProblem& P, const Process& proc,
                                  const Multipliers& mult, const AdjointPath& adjoint,
                                  const VerifyOptions& opts = {});

/// Convenience: multipliers via the rank route (sphere fallback), adjoint
/// from the transversality terminal value, then verify.
PMPCertificate certify(const BolzaProblem& P, const Process& proc,
                       const VerifyOptions& opts = {});

/// Terminal adjoint value prescribed by transversality:
/// sum_alpha lambda_alpha grad g^alpha + sum_beta mu_beta grad h^beta.
Vec transversality_terminal(const BolzaProblem& P, const Process& proc, const Multipliers& mult);

struct NonvanishingReport {
  double minimum = 0.0;
  double argmin_time = 0.0;
  bool degenerate = false;
};

enum class NonvanishingMode { Lambda0AndAdjoint, AdjointAlone };

NonvanishingReport nonvanishing_scan(const PMPCertificate& cert, NonvanishingMode mode,
                                     int samples = 512);

struct ShootingOptions {
  int max_iterations = 50;
  double residual_tol = 1e-9;
  double fd_step = 1e-7;
  int max_backtracks = 30;
  ode::Options ode;
};

struct ShootingResult {
  Process process;
  Multipliers multipliers;
  AdjointPath adjoint;
  std::vector<double> residual_history;
};

/// Indirect method for smooth instances with the control unconstrained in
/// the interior: Newton on (p(0), mu) -> (terminal equality violations,
/// transversality residual), the control recovered pointwise by maximizing
/// the Hamiltonian (closed form when the problem supplies one, inner ascent
/// otherwise). Inequality constraints must be absent or inactive.
ShootingResult shooting_solve(const BolzaProblem& P, const Vec& pi, const Vec& p0_guess,
                              const Vec& mu_guess, const ShootingOptions& opts = {});

}  // namespace octool::pmp

#endif  // OCTOOL_PMP_HPP_
