#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "octool/builtins.hpp"
#include "octool/flow.hpp"
#include "octool/pmp.hpp"
#include "octool/rng.hpp"
#include "oracles.hpp"

using namespace octool;

namespace {

Vec v1(double x) { return Vec::Constant(1, x); }

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

// Steering with the equality constraint duplicated: engineered rank
// deficiency for the composed family.
BolzaProblem duplicated_steering() {
  BolzaProblem P = builtins::steering().problem;
  P.name = "steering_dup";
  P.h.push_back(P.h[0]);
  P.finalize();
  return P;
}

}  // namespace

TEST_CASE("adjoint_backward: homogeneous and constant cases") {
  auto st = builtins::steering();
  const Process proc = st.family(v1(1.0));
  // lambda0 = 0, pT = 0: identically zero
  const auto zero = pmp::adjoint_backward(st.problem, proc, 0.0, v1(0.0));
  CHECK(sup_norm(zero.p.values()) <= 1e-14);
  // integrator dynamics: p stays constant
  const auto flat = pmp::adjoint_backward(st.problem, proc, 1.0, v1(0.7));
  CHECK(std::abs(flat.p.eval_scalar(0.0) - 0.7) <= 1e-12);
  CHECK(std::abs(flat.p.eval_scalar(0.31) - 0.7) <= 1e-12);
}

TEST_CASE("adjoint_backward: linear-quadratic closed form") {
  auto lq = builtins::lq_scalar();
  const Process proc = lq.family(v1(0.0));
  const auto adj = pmp::adjoint_backward(lq.problem, proc, 1.0, v1(0.0));
  double worst = 0.0;
  for (int k = 0; k <= 50; ++k) {
    const double t = k / 50.0;
    worst = std::max(worst, std::abs(adj.p.eval_scalar(t) - oracles::lq::p(t)));
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("adjoint linearity in (lambda0, pT)") {
  auto lq = builtins::lq_scalar();
  const Process proc = lq.family(v1(0.2));
  const auto a1 = pmp::adjoint_backward(lq.problem, proc, 1.0, v1(0.4));
  const auto a3 = pmp::adjoint_backward(lq.problem, proc, 3.0, v1(1.2));
  double worst = 0.0;
  for (int k = 0; k <= 20; ++k) {
    const double t = k / 20.0;
    worst = std::max(worst, std::abs(a3.p.eval_scalar(t) - 3.0 * a1.p.eval_scalar(t)));
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("solve_multipliers: unconstrained stationarity and the steering multiplier") {
  auto lq = builtins::lq_scalar();
  const auto m0 = pmp::solve_multipliers(lq.problem, lq.family(v1(0.0)));
  CHECK(m0.lambda.size() == 1);
  CHECK(m0.lambda[0] == 1.0);
  CHECK(m0.normalized);

  auto st = builtins::steering();
  const double pi = 1.3;
  const auto m1 = pmp::solve_multipliers(st.problem, st.family(v1(pi)));
  CHECK(m1.mu[0] == doctest::Approx(oracles::steering::multiplier(pi)).epsilon(1e-10));
}

TEST_CASE("solve_multipliers: duplicated constraint is rank deficient") {
  const BolzaProblem P = duplicated_steering();
  const Process proc = builtins::steering().family(v1(1.0));
  try {
    (void)pmp::solve_multipliers(P, proc);
    FAIL("expected RankDeficiencyError");
  } catch (const RankDeficiencyError& e) {
    // spectrum of the 1x2 composed family: a single singular value, rank 1 < 2
    CHECK(e.singular_values().size() == 1);
    CHECK(e.singular_values()[0] > 0.0);
  }
}

TEST_CASE("multiplier uniqueness under constraint permutation") {
  // two equality constraints h1 = x1 - p1, h2 = x2 - 2 p1 on a 2-state
  // integrator; permuting them must permute the multipliers exactly.
  BolzaProblem P;
  P.name = "two_constraints";
  P.state_dim = 2;
  P.control_dim = 2;
  P.param_dim = 1;
  P.horizon = 1.0;
  P.initial_state = Vec::Zero(2);
  P.f0 = [](double, const Vec&, const Vec& u, const Vec&) { return -0.5 * u.squaredNorm(); };
  P.f = [](double, const Vec&, const Vec& u, const Vec&) { return u; };
  P.f0_x = [](double, const Vec&, const Vec&, const Vec&) { return RowVec::Zero(2); };
  P.f0_u = [](double, const Vec&, const Vec& u, const Vec&) -> RowVec { return -u.transpose(); };
  P.f0_p = [](double, const Vec&, const Vec&, const Vec&) { return RowVec::Zero(1); };
  P.f_x = [](double, const Vec&, const Vec&, const Vec&) { return Mat::Zero(2, 2); };
  P.f_u = [](double, const Vec&, const Vec&, const Vec&) { return Mat::Identity(2, 2); };
  P.f_p = [](double, const Vec&, const Vec&, const Vec&) { return Mat::Zero(2, 1); };
  P.h.push_back(TerminalFn{[](const Vec& xi, const Vec& pi) { return xi[0] - pi[0]; },
                           [](const Vec&, const Vec&) {
                             RowVec r(2);
                             r << 1.0, 0.0;
                             return r;
                           },
                           [](const Vec&, const Vec&) { return RowVec::Constant(1, -1.0); }});
  P.h.push_back(TerminalFn{[](const Vec& xi, const Vec& pi) { return xi[1] - 2.0 * pi[0]; },
                           [](const Vec&, const Vec&) {
                             RowVec r(2);
                             r << 0.0, 1.0;
                             return r;
                           },
                           [](const Vec&, const Vec&) { return RowVec::Constant(1, -2.0); }});
  P.finalize();

  BolzaProblem Q = P;
  std::swap(Q.h[0], Q.h[1]);

  const Vec pi = v1(0.8);
  // optimal process: straight line to (pi, 2 pi)
  PiecewiseC1Fn x = PiecewiseC1Fn::smooth(
      1.0, 2, [pi](double t) { return v2(pi[0] * t, 2.0 * pi[0] * t); },
      [pi](double) { return v2(pi[0], 2.0 * pi[0]); });
  PiecewiseFn u = PiecewiseFn::constant(1.0, v2(pi[0], 2.0 * pi[0]));
  const Process proc{x, u, pi};

  const auto mp = pmp::solve_multipliers(P, proc);
  const auto mq = pmp::solve_multipliers(Q, proc);
  CHECK(std::abs(mp.mu[0] - mq.mu[1]) <= 1e-10);
  CHECK(std::abs(mp.mu[1] - mq.mu[0]) <= 1e-10);
}

TEST_CASE("check_qualification") {
  auto lq = builtins::lq_scalar();
  const Process lproc = lq.family(v1(0.0));
  for (auto mode : {pmp::QualificationMode::QC0, pmp::QualificationMode::QC1,
                    pmp::QualificationMode::LI}) {
    const auto rep = pmp::check_qualification(lq.problem, lproc, mode);
    CHECK(rep.passed);  // vacuous or scalar families
  }

  auto st = builtins::steering();
  const auto li = pmp::check_qualification(st.problem, st.family(v1(1.0)),
                                           pmp::QualificationMode::LI);
  CHECK(li.passed);
  CHECK(li.sigma_min == doctest::Approx(1.0));

  // active inequality with zero gradient: QC1 must fail
  BolzaProblem bad = st.problem;
  bad.g.push_back(TerminalFn{[](const Vec& xi, const Vec& pi) { return xi[0] - pi[0]; },
                             [](const Vec&, const Vec&) { return RowVec::Zero(1); },
                             [](const Vec&, const Vec&) { return RowVec::Zero(1); }});
  bad.finalize();
  const auto qc1 = pmp::check_qualification(bad, st.family(v1(1.0)),
                                            pmp::QualificationMode::QC1);
  CHECK_FALSE(qc1.passed);
}

TEST_CASE("verify_certificate: the linear-quadratic optimum passes everything") {
  auto lq = builtins::lq_scalar();
  const Process proc = lq.family(v1(0.0));
  const auto cert = pmp::certify(lq.problem, proc);
  CHECK(cert.all_passed());
  CHECK_FALSE(cert.degenerate);
  for (const char* name : {"NN", "Si", "Sl", "TC", "AE", "MP", "CH", "dH"}) {
    INFO(name);
    CHECK(cert.conditions.at(name).verdict == pmp::Verdict::Pass);
    CHECK(cert.conditions.at(name).residual <= 1e-6);
  }
}

TEST_CASE("verify_certificate: steering optimum passes; perturbation breaks feasibility") {
  auto st = builtins::steering();
  const Vec pi = v1(1.0);
  const Process proc = st.family(pi);
  const auto cert = pmp::certify(st.problem, proc);
  CHECK(cert.all_passed());

  // u + 0.1: the constant control still maximizes the Hamiltonian for the
  // recomputed multiplier, but the terminal constraint is now violated.
  const PiecewiseFn worse = linear_combination(1.0, proc.u, 1.0,
                                               PiecewiseFn::constant(1.0, 0.1));
  const Process pproc{flow::integrate_cauchy(st.problem, worse, pi), worse, pi};
  const auto rep = validate_process(st.problem, pproc, 1e-8);
  CHECK_FALSE(rep.feasible());
  CHECK(rep.equality_violation[0] == doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("verify_certificate: perturbed control fails (MP) on the free-endpoint problem") {
  auto lq = builtins::lq_scalar();
  const Vec pi = v1(0.0);
  const Process proc = lq.family(pi);
  const PiecewiseFn worse = linear_combination(1.0, proc.u, 1.0,
                                               PiecewiseFn::constant(1.0, 0.1));
  const Process pproc{flow::integrate_cauchy(lq.problem, worse, pi), worse, pi};
  const auto pcert = pmp::certify(lq.problem, pproc);
  CHECK(pcert.conditions.at("MP").verdict == pmp::Verdict::Fail);
  CHECK(pcert.conditions.at("MP").residual >= 0.001);
}

TEST_CASE("verify_certificate: autonomous problems have a flat Hamiltonian") {
  auto lq = builtins::lq_scalar();
  const Process proc = lq.family(v1(0.0));
  const auto cert = pmp::certify(lq.problem, proc);
  CHECK(cert.conditions.at("dH").verdict == pmp::Verdict::Pass);
  CHECK(cert.conditions.at("dH").residual <= 1e-6);
}

TEST_CASE("certificate verdicts are invariant under positive multiplier scaling") {
  auto st = builtins::steering();
  const Vec pi = v1(0.6);
  const Process proc = st.family(pi);
  const auto mult = pmp::solve_multipliers(st.problem, proc);
  const auto adj =
      pmp::adjoint_backward(st.problem, proc, 1.0,
                            pmp::transversality_terminal(st.problem, proc, mult));
  const auto base = pmp::verify_certificate(st.problem, proc, mult, adj);

  pmp::Multipliers scaled = mult;
  const double c = 2.5;
  scaled.lambda *= c;
  scaled.mu *= c;
  scaled.normalized = false;
  const auto sadj =
      pmp::adjoint_backward(st.problem, proc, c,
                            pmp::transversality_terminal(st.problem, proc, scaled));
  const auto re = pmp::verify_certificate(st.problem, proc, scaled, sadj);
  for (const char* name : {"Si", "Sl", "TC", "AE", "MP"}) {
    INFO(name);
    CHECK(re.conditions.at(name).verdict == base.conditions.at(name).verdict);
  }
}

TEST_CASE("Bolza and Mayer routes agree on multipliers and adjoint") {
  auto st = builtins::steering();
  const Vec pi = v1(1.1);
  const Process proc = st.family(pi);
  const auto direct = pmp::solve_multipliers(st.problem, proc);
  const auto dadj =
      pmp::adjoint_backward(st.problem, proc, 1.0,
                            pmp::transversality_terminal(st.problem, proc, direct));

  const BolzaProblem M = augment_to_mayer(st.problem);
  const Process lifted = lift_process(st.problem, proc);
  const auto mayer = pmp::solve_multipliers(M, lifted);
  CHECK(std::abs(mayer.mu[0] - direct.mu[0]) <= 1e-8);

  const auto madj = pmp::adjoint_backward(M, lifted, 1.0,
                                          pmp::transversality_terminal(M, lifted, mayer));
  double worst_xi = 0.0, worst_sigma = 0.0;
  for (int k = 0; k <= 40; ++k) {
    const double t = k / 40.0;
    const Vec pm = madj.p.eval(t);
    worst_sigma = std::max(worst_sigma, std::abs(pm[0] - 1.0));  // sigma adjoint == lambda0
    worst_xi = std::max(worst_xi, std::abs(pm[1] - dadj.p.eval_scalar(t)));
  }
  CHECK(worst_sigma <= 1e-9);
  CHECK(worst_xi <= 1e-8);
}

TEST_CASE("interior maximization implies control stationarity") {
  auto lq = builtins::lq_scalar();
  const Process proc = lq.family(v1(0.0));
  const auto mult = pmp::solve_multipliers(lq.problem, proc);
  const auto adj =
      pmp::adjoint_backward(lq.problem, proc, 1.0,
                            pmp::transversality_terminal(lq.problem, proc, mult));
  double worst = 0.0;
  for (int k = 0; k <= 60; ++k) {
    const double t = k / 60.0;
    const Vec xv = proc.x.eval(t), uv = proc.u.eval(t), pv = adj.p.eval(t);
    const RowVec dHu = lq.problem.f0_u(t, xv, uv, Vec::Zero(1)) +
                       pv.transpose() * lq.problem.f_u(t, xv, uv, Vec::Zero(1));
    worst = std::max(worst, dHu.norm());
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("nonvanishing scan") {
  auto st = builtins::steering();
  const Vec pi = v1(1.0);
  const auto cert = pmp::certify(st.problem, st.family(pi));
  const auto pair = pmp::nonvanishing_scan(cert, pmp::NonvanishingMode::Lambda0AndAdjoint);
  CHECK(pair.minimum >= 1.0);
  CHECK_FALSE(pair.degenerate);
  const auto alone = pmp::nonvanishing_scan(cert, pmp::NonvanishingMode::AdjointAlone);
  CHECK(alone.minimum == doctest::Approx(oracles::steering::multiplier(1.0)).epsilon(1e-8));

  pmp::PMPCertificate degenerate = cert;
  degenerate.multipliers.lambda[0] = 0.0;
  degenerate.adjoint->p = pmp::adjoint_backward(st.problem, st.family(pi), 0.0, v1(0.0)).p;
  const auto rep = pmp::nonvanishing_scan(degenerate, pmp::NonvanishingMode::AdjointAlone);
  CHECK(rep.degenerate);
}

TEST_CASE("shooting: steering converges in a few iterations") {
  auto st = builtins::steering();
  const Vec pi = v1(1.0);
  const auto res = pmp::shooting_solve(st.problem, pi, v1(0.0), v1(0.0));
  CHECK(res.residual_history.size() <= 6);  // linear problem: one Newton step
  CHECK(res.multipliers.mu[0] == doctest::Approx(oracles::steering::multiplier(1.0)).epsilon(1e-8));
  CHECK(std::abs(res.process.u.eval_scalar(0.5) - 1.0) <= 1e-8);
  const auto cert = pmp::verify_certificate(st.problem, res.process, res.multipliers,
                                            res.adjoint);
  CHECK(cert.all_passed());
}

TEST_CASE("shooting: linear-quadratic value and certificate") {
  auto lq = builtins::lq_scalar();
  const Vec pi = v1(0.0);
  const auto res = pmp::shooting_solve(lq.problem, pi, v1(0.0), Vec::Zero(0));
  CHECK(std::abs(criterion(lq.problem, res.process) - oracles::lq::value_plain()) <= 1e-8);
  const auto cert = pmp::verify_certificate(lq.problem, res.process, res.multipliers,
                                            res.adjoint);
  CHECK(cert.all_passed());
}

TEST_CASE("shooting: unreachable target does not converge") {
  // dx = 0: the terminal constraint x(T) = pi is unreachable from 0 for pi != 0
  BolzaProblem P = builtins::steering().problem;
  P.f = [](double, const Vec&, const Vec&, const Vec&) { return Vec::Zero(1); };
  P.f_u = [](double, const Vec&, const Vec&, const Vec&) { return Mat::Zero(1, 1); };
  P.f_x = [](double, const Vec&, const Vec&, const Vec&) { return Mat::Zero(1, 1); };
  P.control_from_adjoint = nullptr;  // H has no control slope; ascent stays put
  P.finalize();
  CHECK_THROWS_AS((void)pmp::shooting_solve(P, v1(1.0), v1(0.0), v1(0.0)), NoConvergenceError);
}

TEST_CASE("shooting: numeric control recovery matches the closed form") {
  auto lq = builtins::lq_scalar();
  BolzaProblem P = lq.problem;
  P.control_from_adjoint = nullptr;  // force the inner ascent
  P.finalize();
  const auto res = pmp::shooting_solve(P, v1(0.0), v1(0.0), Vec::Zero(0));
  CHECK(std::abs(criterion(P, res.process) - oracles::lq::value_plain()) <= 1e-7);
}

TEST_CASE("bang-bang optimum: box grid maximization and Hamiltonian continuity") {
  // running reward (t - 1/2) u with u in [-1, 1]: the maximizer switches sign
  // at t = 1/2 and the Hamiltonian along the process is |t - 1/2|, continuous
  // with a kink.
  BolzaProblem P;
  P.name = "bang";
  P.state_dim = 1;
  P.control_dim = 1;
  P.param_dim = 0;
  P.horizon = 1.0;
  P.initial_state = Vec::Zero(1);
  P.f0 = [](double t, const Vec&, const Vec& u, const Vec&) { return (t - 0.5) * u[0]; };
  P.f = [](double, const Vec&, const Vec& u, const Vec&) { return u; };
  P.f0_x = [](double, const Vec&, const Vec&, const Vec&) { return RowVec::Zero(1); };
  P.f0_u = [](double t, const Vec&, const Vec&, const Vec&) {
    return RowVec::Constant(1, t - 0.5);
  };
  P.f0_p = [](double, const Vec&, const Vec&, const Vec&) { return RowVec::Zero(0); };
  P.f_x = [](double, const Vec&, const Vec&, const Vec&) { return Mat::Zero(1, 1); };
  P.f_u = [](double, const Vec&, const Vec&, const Vec&) { return Mat::Identity(1, 1); };
  P.f_p = [](double, const Vec&, const Vec&, const Vec&) { return Mat::Zero(1, 0); };
  P.f0_t = [](double, const Vec&, const Vec& u, const Vec&) { return u[0]; };
  P.f_t = [](double, const Vec&, const Vec&, const Vec&) { return Vec::Zero(1); };
  P.control_box.lower = Vec::Constant(1, -1.0);
  P.control_box.upper = Vec::Constant(1, 1.0);
  P.finalize();

  const Grid g(1.0, {0.0, 0.5, 1.0});
  const PiecewiseFn u(g, {[](double) { return v1(-1.0); }, [](double) { return v1(1.0); }}, 1);
  const Process proc{flow::integrate_cauchy(P, u, Vec::Zero(0)), u, Vec::Zero(0)};
  CHECK(criterion(P, proc) == doctest::Approx(0.25).epsilon(1e-10));

  const auto cert = pmp::certify(P, proc);
  CHECK(cert.all_passed());
  CHECK(cert.conditions.at("MP").residual <= 1e-9);
  CHECK(cert.conditions.at("CH").residual <= 1e-9);   // H continuous across the switch
  CHECK(cert.conditions.at("dH").verdict == pmp::Verdict::Pass);

  // moving the switch makes the control suboptimal on a subinterval
  const Grid bad(1.0, {0.0, 0.65, 1.0});
  const PiecewiseFn ub(bad, {[](double) { return v1(-1.0); }, [](double) { return v1(1.0); }}, 1);
  const Process pbad{flow::integrate_cauchy(P, ub, Vec::Zero(0)), ub, Vec::Zero(0)};
  const auto cbad = pmp::certify(P, pbad);
  CHECK(cbad.conditions.at("MP").verdict == pmp::Verdict::Fail);
  CHECK(cbad.conditions.at("MP").residual == doctest::Approx(0.3).epsilon(1e-6));
}

TEST_CASE("control surjectivity scan finds full-rank times") {
  auto st = builtins::steering();
  const auto times = pmp::control_surjectivity_scan(st.problem, st.family(v1(1.0)), 16);
  CHECK(times.size() == 17);  // f_u == 1 everywhere

  auto cd = builtins::constant_drift();
  const auto none = pmp::control_surjectivity_scan(cd.problem, cd.family(v1(1.0)), 16);
  CHECK(none.empty());  // f_u == 0 everywhere
}
