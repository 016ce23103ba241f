#include "octool/problem.hpp"

#include <cmath>
#include <limits>
#include <memory>

namespace octool {

namespace {

double fd_step(double scale) { return 1e-6 * (1.0 + std::abs(scale)); }
double fd_step(const Vec& v) { return 1e-6 * (1.0 + v.norm()); }

}  // namespace

Vec ControlBox::center(int control_dim) const {
  if (is_box()) return 0.5 * (*lower + *upper);
  return Vec::Zero(control_dim);
}

Vec ControlBox::clamp(const Vec& zeta) const {
  if (!is_box()) return zeta;
  return zeta.cwiseMax(*lower).cwiseMin(*upper);
}

bool ControlBox::contains(const Vec& zeta, double tol) const {
  if (!is_box()) return true;
  return ((zeta - *lower).minCoeff() >= -tol) && ((*upper - zeta).minCoeff() >= -tol);
}

void BolzaProblem::finalize() {
  if (state_dim < 1) throw std::invalid_argument(name + ": state_dim must be >= 1");
  if (control_dim < 1) throw std::invalid_argument(name + ": control_dim must be >= 1");
  if (param_dim < 0) throw std::invalid_argument(name + ": param_dim must be >= 0");
  if (!(horizon > 0.0)) throw std::invalid_argument(name + ": horizon must be positive");
  if (initial_state.size() != state_dim)
    throw std::invalid_argument(name + ": initial_state dimension mismatch");
  if (g.empty()) {
    g.push_back(TerminalFn{[](const Vec&, const Vec&) { return 0.0; },
                           [d = state_dim](const Vec&, const Vec&) { return RowVec::Zero(d); },
                           [d = param_dim](const Vec&, const Vec&) { return RowVec::Zero(d); }});
  }
  if (!f0 || !f) throw std::invalid_argument(name + ": f0 and f are required");

  if (deriv_mode != DerivMode::Analytic) {
    synthesize_missing_derivatives();
  }

  // Probe every callback once and check shapes.
  const double t0 = 0.0;
  const Vec xi = initial_state;
  const Vec ze = control_box.center(control_dim);
  const Vec pi = Vec::Zero(param_dim);
  (void)f0(t0, xi, ze, pi);
  if (f(t0, xi, ze, pi).size() != state_dim)
    throw std::invalid_argument(name + ": f value dimension mismatch");
  const auto check_row = [&](const char* what, const RowVec& r, int want) {
    if (r.size() != want)
      throw std::invalid_argument(name + ": " + what + " dimension mismatch");
  };
  const auto check_mat = [&](const char* what, const Mat& m, int rows, int cols) {
    if (m.rows() != rows || m.cols() != cols)
      throw std::invalid_argument(name + ": " + what + " shape mismatch");
  };
  if (f0_x) check_row("f0_x", f0_x(t0, xi, ze, pi), state_dim);
  if (f0_u) check_row("f0_u", f0_u(t0, xi, ze, pi), control_dim);
  if (f0_p) check_row("f0_p", f0_p(t0, xi, ze, pi), param_dim);
  if (f_x) check_mat("f_x", f_x(t0, xi, ze, pi), state_dim, state_dim);
  if (f_u) check_mat("f_u", f_u(t0, xi, ze, pi), state_dim, control_dim);
  if (f_p) check_mat("f_p", f_p(t0, xi, ze, pi), state_dim, param_dim);
  for (const auto& fn : g) {
    (void)fn.value(xi, pi);
    if (fn.grad_state) check_row("g grad_state", fn.grad_state(xi, pi), state_dim);
    if (fn.grad_param) check_row("g grad_param", fn.grad_param(xi, pi), param_dim);
  }
  for (const auto& fn : h) {
    (void)fn.value(xi, pi);
    if (fn.grad_state) check_row("h grad_state", fn.grad_state(xi, pi), state_dim);
    if (fn.grad_param) check_row("h grad_param", fn.grad_param(xi, pi), param_dim);
  }
}

namespace {

// Central-difference synthesis for a scalar-valued slot.
template <typename F>
std::function<RowVec(double, const Vec&, const Vec&, const Vec&)> fd_row_wrt(
    F fn, int which, int dim) {
  return [fn, which, dim](double t, const Vec& x, const Vec& u, const Vec& p) -> RowVec {
    RowVec out(dim);
    const Vec& base = which == 0 ? x : (which == 1 ? u : p);
    const double hstep = fd_step(base);
    for (int i = 0; i < dim; ++i) {
      Vec lo = base, hi = base;
      lo[i] -= hstep;
      hi[i] += hstep;
      double flo, fhi;
      if (which == 0) {
        flo = fn(t, lo, u, p);
        fhi = fn(t, hi, u, p);
      } else if (which == 1) {
        flo = fn(t, x, lo, p);
        fhi = fn(t, x, hi, p);
      } else {
        flo = fn(t, x, u, lo);
        fhi = fn(t, x, u, hi);
      }
      out[i] = (fhi - flo) / (2.0 * hstep);
    }
    return out;
  };
}

template <typename F>
std::function<Mat(double, const Vec&, const Vec&, const Vec&)> fd_jac_wrt(F fn, int which,
                                                                          int rows, int cols) {
  return [fn, which, rows, cols](double t, const Vec& x, const Vec& u, const Vec& p) -> Mat {
    Mat out(rows, cols);
    const Vec& base = which == 0 ? x : (which == 1 ? u : p);
    const double hstep = fd_step(base);
    for (int i = 0; i < cols; ++i) {
      Vec lo = base, hi = base;
      lo[i] -= hstep;
      hi[i] += hstep;
      Vec flo, fhi;
      if (which == 0) {
        flo = fn(t, lo, u, p);
        fhi = fn(t, hi, u, p);
      } else if (which == 1) {
        flo = fn(t, x, lo, p);
        fhi = fn(t, x, hi, p);
      } else {
        flo = fn(t, x, u, lo);
        fhi = fn(t, x, u, hi);
      }
      out.col(i) = (fhi - flo) / (2.0 * hstep);
    }
    return out;
  };
}

std::function<RowVec(const Vec&, const Vec&)> fd_terminal_grad(
    std::function<double(const Vec&, const Vec&)> fn, bool wrt_state, int dim) {
  return [fn, wrt_state, dim](const Vec& xi, const Vec& pi) -> RowVec {
    RowVec out(dim);
    const Vec& base = wrt_state ? xi : pi;
    const double hstep = fd_step(base);
    for (int i = 0; i < dim; ++i) {
      Vec lo = base, hi = base;
      lo[i] -= hstep;
      hi[i] += hstep;
      const double flo = wrt_state ? fn(lo, pi) : fn(xi, lo);
      const double fhi = wrt_state ? fn(hi, pi) : fn(xi, hi);
      out[i] = (fhi - flo) / (2.0 * hstep);
    }
    return out;
  };
}

}  // namespace

void BolzaProblem::synthesize_missing_derivatives() {
  if (!f0_x) f0_x = fd_row_wrt(f0, 0, state_dim);
  if (!f0_u) f0_u = fd_row_wrt(f0, 1, control_dim);
  if (!f0_p) f0_p = fd_row_wrt(f0, 2, param_dim);
  if (!f_x) f_x = fd_jac_wrt(f, 0, state_dim, state_dim);
  if (!f_u) f_u = fd_jac_wrt(f, 1, state_dim, control_dim);
  if (!f_p) f_p = fd_jac_wrt(f, 2, state_dim, param_dim);
  if (!f0_t) {
    auto fn = f0;
    f0_t = [fn](double t, const Vec& x, const Vec& u, const Vec& p) {
      const double hs = fd_step(t);
      return (fn(t + hs, x, u, p) - fn(t - hs, x, u, p)) / (2.0 * hs);
    };
  }
  if (!f_t) {
    auto fn = f;
    f_t = [fn](double t, const Vec& x, const Vec& u, const Vec& p) -> Vec {
      const double hs = fd_step(t);
      return (fn(t + hs, x, u, p) - fn(t - hs, x, u, p)) / (2.0 * hs);
    };
  }
  for (auto& fn : g) {
    if (!fn.grad_state) fn.grad_state = fd_terminal_grad(fn.value, true, state_dim);
    if (!fn.grad_param) fn.grad_param = fd_terminal_grad(fn.value, false, param_dim);
  }
  for (auto& fn : h) {
    if (!fn.grad_state) fn.grad_state = fd_terminal_grad(fn.value, true, state_dim);
    if (!fn.grad_param) fn.grad_param = fd_terminal_grad(fn.value, false, param_dim);
  }
}

bool FeasibilityReport::feasible() const {
  if (dynamics_residual > tolerance || initial_error > tolerance) return false;
  if (inequality_slack.size() > 0 && inequality_slack.minCoeff() < -tolerance) return false;
  if (equality_violation.size() > 0 && equality_violation.maxCoeff() > tolerance) return false;
  return true;
}

double FeasibilityReport::worst() const {
  double w = std::max(dynamics_residual, initial_error);
  if (inequality_slack.size() > 0) w = std::max(w, -inequality_slack.minCoeff());
  if (equality_violation.size() > 0) w = std::max(w, equality_violation.maxCoeff());
  return w;
}

FeasibilityReport validate_process(const BolzaProblem& P, const Process& proc, double tol) {
  if (proc.x.dim() != P.state_dim || proc.u.dim() != P.control_dim ||
      proc.pi.size() != P.param_dim)
    throw std::domain_error(P.name + ": process dimension mismatch");

  FeasibilityReport rep;
  rep.tolerance = tol;
  rep.initial_error = (proc.x.eval(0.0) - P.initial_state).norm();

  const PiecewiseFn dx = extended_derivative(proc.x);
  const Grid merged = merge_grids(proc.x.grid(), proc.u.grid());
  const auto& bp = merged.breakpoints();
  double sup = 0.0;
  constexpr int kSamples = 16;
  for (std::size_t j = 0; j + 1 < bp.size(); ++j) {
    const double mid = 0.5 * (bp[j] + bp[j + 1]);
    const std::size_t ix = proc.x.grid().locate(mid);
    const std::size_t iu = proc.u.grid().locate(mid);
    for (int k = 0; k <= kSamples; ++k) {
      const double t = bp[j] + (bp[j + 1] - bp[j]) * k / static_cast<double>(kSamples);
      const Vec xv = proc.x.values().eval_segment(ix, t);
      const Vec uv = proc.u.eval_segment(iu, t);
      sup = std::max(sup, (dx.eval_segment(ix, t) - P.f(t, xv, uv, proc.pi)).norm());
    }
  }
  rep.dynamics_residual = sup;

  const Vec xT = proc.x.eval(P.horizon);
  rep.inequality_slack.resize(P.inequality_count());
  for (int a = 1; a <= P.inequality_count(); ++a)
    rep.inequality_slack[a - 1] = P.g[a].value(xT, proc.pi);
  rep.equality_violation.resize(P.equality_count());
  for (int b = 0; b < P.equality_count(); ++b)
    rep.equality_violation[b] = std::abs(P.h[b].value(xT, proc.pi));
  return rep;
}

double criterion(const BolzaProblem& P, const Process& proc) {
  const Grid merged = merge_grids(proc.x.grid(), proc.u.grid());
  const auto& bp = merged.breakpoints();
  double running = 0.0;
  for (std::size_t j = 0; j + 1 < bp.size(); ++j) {
    const double mid = 0.5 * (bp[j] + bp[j + 1]);
    const std::size_t ix = proc.x.grid().locate(mid);
    const std::size_t iu = proc.u.grid().locate(mid);
    const auto integrand = [&](double t) -> Vec {
      return Vec::Constant(
          1, P.f0(t, proc.x.values().eval_segment(ix, t), proc.u.eval_segment(iu, t), proc.pi));
    };
    const quad::Result r = quad::integrate(integrand, bp[j], bp[j + 1]);
    if (!r.converged)
      throw std::runtime_error(P.name + ": running-reward quadrature failed on segment [" +
                               std::to_string(bp[j]) + ", " + std::to_string(bp[j + 1]) +
                               "] (error estimate " + std::to_string(r.error_estimate) + ")");
    running += r.value[0];
  }
  return running + P.g[0].value(proc.x.eval(P.horizon), proc.pi);
}

BolzaProblem augment_to_mayer(const BolzaProblem& P) {
  auto base = std::make_shared<const BolzaProblem>(P);
  const int n = P.state_dim;
  BolzaProblem M;
  M.name = P.name + "_mayer";
  M.state_dim = n + 1;
  M.control_dim = P.control_dim;
  M.param_dim = P.param_dim;
  M.horizon = P.horizon;
  M.initial_state = Vec::Zero(n + 1);
  M.initial_state.tail(n) = P.initial_state;

  const auto split = [](const Vec& X) { return X.tail(X.size() - 1); };

  M.f0 = [](double, const Vec&, const Vec&, const Vec&) { return 0.0; };
  M.f = [base, split](double t, const Vec& X, const Vec& u, const Vec& p) -> Vec {
    const Vec xi = split(X);
    Vec out(X.size());
    out[0] = base->f0(t, xi, u, p);
    out.tail(X.size() - 1) = base->f(t, xi, u, p);
    return out;
  };

  M.f0_x = [n](double, const Vec&, const Vec&, const Vec&) { return RowVec::Zero(n + 1); };
  M.f0_u = [mu = P.control_dim](double, const Vec&, const Vec&, const Vec&) {
    return RowVec::Zero(mu);
  };
  M.f0_p = [np = P.param_dim](double, const Vec&, const Vec&, const Vec&) {
    return RowVec::Zero(np);
  };
  M.f_x = [base, split, n](double t, const Vec& X, const Vec& u, const Vec& p) -> Mat {
    const Vec xi = split(X);
    Mat out = Mat::Zero(n + 1, n + 1);
    out.block(0, 1, 1, n) = base->f0_x(t, xi, u, p);
    out.block(1, 1, n, n) = base->f_x(t, xi, u, p);
    return out;
  };
  M.f_u = [base, split, n, mu = P.control_dim](double t, const Vec& X, const Vec& u,
                                               const Vec& p) -> Mat {
    const Vec xi = split(X);
    Mat out(n + 1, mu);
    out.row(0) = base->f0_u(t, xi, u, p);
    out.bottomRows(n) = base->f_u(t, xi, u, p);
    return out;
  };
  M.f_p = [base, split, n, np = P.param_dim](double t, const Vec& X, const Vec& u,
                                             const Vec& p) -> Mat {
    const Vec xi = split(X);
    Mat out(n + 1, np);
    out.row(0) = base->f0_p(t, xi, u, p);
    out.bottomRows(n) = base->f_p(t, xi, u, p);
    return out;
  };
  if (P.has_time_partials()) {
    M.f0_t = [](double, const Vec&, const Vec&, const Vec&) { return 0.0; };
    M.f_t = [base, split, n](double t, const Vec& X, const Vec& u, const Vec& p) -> Vec {
      const Vec xi = split(X);
      Vec out(n + 1);
      out[0] = base->f0_t(t, xi, u, p);
      out.tail(n) = base->f_t(t, xi, u, p);
      return out;
    };
  }

  const auto lift_terminal = [base, split, n](const TerminalFn& fn,
                                              bool add_sigma) -> TerminalFn {
    TerminalFn out;
    out.value = [fn, split, add_sigma](const Vec& X, const Vec& p) {
      return (add_sigma ? X[0] : 0.0) + fn.value(split(X), p);
    };
    out.grad_state = [fn, split, n, add_sigma](const Vec& X, const Vec& p) -> RowVec {
      RowVec out_row = RowVec::Zero(n + 1);
      out_row[0] = add_sigma ? 1.0 : 0.0;
      out_row.tail(n) = fn.grad_state(split(X), p);
      return out_row;
    };
    out.grad_param = [fn, split](const Vec& X, const Vec& p) { return fn.grad_param(split(X), p); };
    return out;
  };

  M.g.push_back(lift_terminal(P.g[0], true));
  for (int a = 1; a <= P.inequality_count(); ++a) M.g.push_back(lift_terminal(P.g[a], false));
  for (const auto& fn : P.h) M.h.push_back(lift_terminal(fn, false));

  M.control_box = P.control_box;
  M.deriv_mode = DerivMode::Analytic;
  if (P.state_guard) {
    const double inf = std::numeric_limits<double>::infinity();
    Vec lo(n + 1), hi(n + 1);
    lo[0] = -inf;
    hi[0] = inf;
    lo.tail(n) = P.state_guard->first;
    hi.tail(n) = P.state_guard->second;
    M.state_guard = std::make_pair(lo, hi);
  }
  M.feasibility_tol = P.feasibility_tol;
  M.finalize();
  return M;
}

Process lift_process(const BolzaProblem& P, const Process& proc) {
  // sigma(t) = int_0^t f0; obtained by quadrature at the merged breakpoints
  // and carried exactly inside each segment.
  const Grid merged = merge_grids(proc.x.grid(), proc.u.grid());
  const auto& bp = merged.breakpoints();
  auto xs = std::make_shared<const PiecewiseC1Fn>(proc.x.with_grid(merged));
  auto us = std::make_shared<const PiecewiseFn>(proc.u.with_grid(merged));
  const auto f0 = P.f0;
  const Vec pi = proc.pi;

  std::vector<double> sigma_at(bp.size(), 0.0);
  for (std::size_t j = 0; j + 1 < bp.size(); ++j) {
    const auto integrand = [&](double t) {
      return f0(t, xs->values().eval_segment(j, t), us->eval_segment(j, t), pi);
    };
    sigma_at[j + 1] = sigma_at[j] + quad::integrate_scalar(integrand, bp[j], bp[j + 1]);
  }

  std::vector<PiecewiseFn::Segment> segs, dsegs;
  const int n = P.state_dim;
  auto dx = std::make_shared<const PiecewiseFn>(extended_derivative(*xs));
  for (std::size_t j = 0; j + 1 < bp.size(); ++j) {
    const double a = bp[j];
    const double s0 = sigma_at[j];
    segs.push_back([xs, us, f0, pi, j, a, s0, n](double t) -> Vec {
      Vec out(n + 1);
      const auto integrand = [&](double r) {
        return f0(r, xs->values().eval_segment(j, r), us->eval_segment(j, r), pi);
      };
      out[0] = s0 + (t > a ? quad::integrate_scalar(integrand, a, t) : 0.0);
      out.tail(n) = xs->values().eval_segment(j, t);
      return out;
    });
    dsegs.push_back([xs, us, dx, f0, pi, j, n](double t) -> Vec {
      Vec out(n + 1);
      out[0] = f0(t, xs->values().eval_segment(j, t), us->eval_segment(j, t), pi);
      out.tail(n) = dx->eval_segment(j, t);
      return out;
    });
  }
  PiecewiseC1Fn lifted(merged, std::move(segs), std::move(dsegs), n + 1);
  return Process{std::move(lifted), proc.u.with_grid(merged), proc.pi};
}

double hamiltonian_eval(const Hamiltonian& H, double t, const Vec& xi, const Vec& zeta,
                        const Vec& p, const Vec& pi) {
  const BolzaProblem& P = *H.problem;
  if (xi.size() != P.state_dim || zeta.size() != P.control_dim || p.size() != P.state_dim ||
      pi.size() != P.param_dim)
    throw std::domain_error(P.name + ": hamiltonian_eval dimension mismatch");
  return H.lambda0 * P.f0(t, xi, zeta, pi) + p.dot(P.f(t, xi, zeta, pi));
}

}  // namespace octool
