#include "octool/envelope.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "octool/rng.hpp"

namespace octool::envelope {

bool SolutionFamily::in_domain(const Vec& pi) const {
  if (domain_lo.size() == 0) return true;
  return ((pi - domain_lo).minCoeff() >= 0.0) && ((domain_hi - pi).minCoeff() >= 0.0);
}

SolutionFamily make_shooting_family(const BolzaProblem& P, const Vec& pi0, double box_radius,
                                    const pmp::ShootingOptions& opts) {
  const pmp::ShootingResult base = pmp::shooting_solve(
      P, pi0, Vec::Zero(P.state_dim), Vec::Zero(P.equality_count()), opts);
  const Vec p0 = base.adjoint.p.eval(0.0);
  const Vec mu0 = base.multipliers.mu;
  auto Pc = std::make_shared<const BolzaProblem>(P);
  SolutionFamily fam;
  fam.provider = [Pc, p0, mu0, opts](const Vec& pi) -> Process {
    return pmp::shooting_solve(*Pc, pi, p0, mu0, opts).process;
  };
  fam.domain_lo = pi0.array() - box_radius;
  fam.domain_hi = pi0.array() + box_radius;
  return fam;
}

double value(const BolzaProblem& P, const SolutionFamily& family, const Vec& pi) {
  if (!family.in_domain(pi))
    throw std::domain_error(P.name + ": parameter outside the family domain");
  return criterion(P, family(pi));
}

EnvelopeReport envelope_directional(const BolzaProblem& P, const SolutionFamily& family,
                                    const Vec& pi0, const Vec& direction) {
  const Process proc = family(pi0);
  // The formula needs the normalized, unique multipliers; a rank failure
  // leaves them undefined and is propagated to the caller.
  const pmp::Multipliers mult = pmp::solve_multipliers(P, proc);
  const Vec pT = pmp::transversality_terminal(P, proc, mult);
  const pmp::AdjointPath adj = pmp::adjoint_backward(P, proc, 1.0, pT);

  EnvelopeReport rep;
  rep.pi0 = pi0;
  rep.direction = direction;
  rep.multipliers = mult;

  const Vec xT = proc.x.eval(P.horizon);
  rep.term_g0 = P.g[0].grad_param(xT, pi0).dot(direction);
  for (int i = 1; i <= P.inequality_count(); ++i)
    rep.term_g += mult.lambda[i] * P.g[i].grad_param(xT, pi0).dot(direction);
  for (int j = 0; j < P.equality_count(); ++j)
    rep.term_h += mult.mu[j] * P.h[j].grad_param(xT, pi0).dot(direction);

  // Integral terms, per segment on the merged grid of x, u and p.
  const Grid merged =
      merge_grids(merge_grids(proc.x.grid(), proc.u.grid()), adj.p.grid());
  const auto& bp = merged.breakpoints();
  double tf0 = 0.0, tf = 0.0;
  for (std::size_t j = 0; j + 1 < bp.size(); ++j) {
    const double mid = 0.5 * (bp[j] + bp[j + 1]);
    const std::size_t ix = proc.x.grid().locate(mid);
    const std::size_t iu = proc.u.grid().locate(mid);
    const std::size_t ip = adj.p.grid().locate(mid);
    tf0 += quad::integrate_scalar(
        [&](double t) {
          return P.f0_p(t, proc.x.values().eval_segment(ix, t), proc.u.eval_segment(iu, t), pi0)
              .dot(direction);
        },
        bp[j], bp[j + 1]);
    tf += quad::integrate_scalar(
        [&](double t) {
          const Vec pv = adj.p.values().eval_segment(ip, t);
          return pv.dot(
              P.f_p(t, proc.x.values().eval_segment(ix, t), proc.u.eval_segment(iu, t), pi0) *
              direction);
        },
        bp[j], bp[j + 1]);
  }
  rep.term_f0 = tf0;
  rep.term_f = tf;
  rep.total = rep.term_g0 + rep.term_g + rep.term_h + rep.term_f0 + rep.term_f;
  return rep;
}

RowVec envelope_gradient(const BolzaProblem& P, const SolutionFamily& family, const Vec& pi0) {
  RowVec grad(P.param_dim);
  for (int k = 0; k < P.param_dim; ++k) {
    Vec e = Vec::Zero(P.param_dim);
    e[k] = 1.0;
    grad[k] = envelope_directional(P, family, pi0, e).total;
  }
  // Linearity check on one fixed non-axis direction.
  if (P.param_dim > 0) {
    Vec d(P.param_dim);
    for (int k = 0; k < P.param_dim; ++k) d[k] = 1.0 / (k + 2.0);
    const double via_formula = envelope_directional(P, family, pi0, d).total;
    const double via_gradient = grad.dot(d);
    if (std::abs(via_formula - via_gradient) > 1e-10 * (1.0 + std::abs(via_formula)))
      throw std::runtime_error(P.name + ": directional derivative is not linear in the direction");
  }
  return grad;
}

FdOracle value_fd_oracle(const BolzaProblem& P, const SolutionFamily& family, const Vec& pi0,
                         const Vec& direction, const std::vector<double>& steps) {
  FdOracle out;
  const double v0 = value(P, family, pi0);
  for (double h : steps) {
    FdRow row;
    row.h = h;
    try {
      const double vp = value(P, family, pi0 + h * direction);
      const double vm = value(P, family, pi0 - h * direction);
      row.forward = (vp - v0) / h;
      row.central = (vp - vm) / (2.0 * h);
      row.ok = true;
      row.status = "ok";
    } catch (const std::exception& e) {
      row.ok = false;
      row.status = std::string("failed: ") + e.what();
    }
    out.rows.push_back(row);
  }
  // Richardson extrapolation of the forward differences (first order in h)
  // from the two smallest successful steps.
  std::vector<const FdRow*> good;
  for (const auto& r : out.rows)
    if (r.ok) good.push_back(&r);
  std::sort(good.begin(), good.end(),
            [](const FdRow* a, const FdRow* b) { return a->h < b->h; });
  if (good.size() >= 2) {
    const double h1 = good[0]->h, h2 = good[1]->h;
    const double d1 = good[0]->forward, d2 = good[1]->forward;
    out.richardson = d1 + (d1 - d2) * h1 / (h2 - h1);
  } else if (good.size() == 1) {
    out.richardson = good[0]->forward;
  }
  if (good.size() >= 3) {
    const double e1 = std::abs(good[0]->forward - good[1]->forward);
    const double e2 = std::abs(good[1]->forward - good[2]->forward);
    const double r1 = good[1]->h / good[0]->h;
    const double r2 = good[2]->h / good[1]->h;
    if (e1 > 0.0 && e2 > 0.0 && r2 > 1.0)
      out.convergence_order = std::log(e2 / e1) / std::log(0.5 * (r1 + r2));
  }
  return out;
}

double integral_functional_differential(
    const std::function<double(double, const Vec&)>& f,
    const std::function<RowVec(double, const Vec&)>& grad_f, const PiecewiseFn& x0,
    const PiecewiseFn& hdir) {
  (void)f;  // the value functional itself is not needed for the differential
  if (x0.dim() != hdir.dim())
    throw std::invalid_argument("integral_functional_differential: dimension mismatch");
  const Grid merged = merge_grids(x0.grid(), hdir.grid());
  const auto& bp = merged.breakpoints();
  double total = 0.0;
  for (std::size_t j = 0; j + 1 < bp.size(); ++j) {
    const double mid = 0.5 * (bp[j] + bp[j + 1]);
    const std::size_t ix = x0.grid().locate(mid);
    const std::size_t ih = hdir.grid().locate(mid);
    total += quad::integrate_scalar(
        [&](double t) {
          return grad_f(t, x0.eval_segment(ix, t)).dot(hdir.eval_segment(ih, t));
        },
        bp[j], bp[j + 1]);
  }
  return total;
}

void ContinuityScan::finish() {
  monotone_decreasing = true;
  double prev = std::numeric_limits<double>::infinity();
  for (auto& shell : shells) {
    shell.max_deviation = 0.0;
    shell.ok = true;
    for (const auto& s : shell.samples) {
      if (!s.ok) {
        shell.ok = false;
        continue;
      }
      shell.max_deviation = std::max(shell.max_deviation, s.deviation);
    }
    if (shell.ok) {
      if (shell.max_deviation > prev + 1e-15) monotone_decreasing = false;
      prev = shell.max_deviation;
    }
  }
}

namespace {

// pi0-centered shell points, radius relative to (1 + ||pi0||), deterministic
// directions shared across shells. A parameter-free problem has nothing to
// vary: no directions, shells stay empty with zero deviation.
std::vector<Vec> shell_directions(int count, int dim, std::uint64_t seed) {
  std::vector<Vec> dirs;
  if (dim < 1) return dirs;
  Rng rng(seed);
  dirs.reserve(count);
  for (int k = 0; k < count; ++k) dirs.push_back(rng.unit_vector(dim));
  return dirs;
}

}  // namespace

std::vector<double> default_shell_radii() { return {1e-1, 1e-2, 1e-3, 1e-4, 1e-5}; }

ContinuityScan multiplier_continuity_scan(const BolzaProblem& P, const SolutionFamily& family,
                                          const Vec& pi0, const std::vector<double>& radii,
                                          const ScanOptions& opts) {
  const Process proc0 = family(pi0);
  const pmp::Multipliers base = pmp::solve_multipliers(P, proc0);
  const auto dirs = shell_directions(opts.directions_per_shell, P.param_dim, opts.seed);
  const double scale = 1.0 + pi0.norm();

  ContinuityScan scan;
  scan.pi0 = pi0;
  scan.shells.resize(radii.size());
  std::vector<std::pair<std::size_t, std::size_t>> tasks;
  for (std::size_t r = 0; r < radii.size(); ++r) {
    scan.shells[r].radius = radii[r];
    scan.shells[r].samples.resize(dirs.size());
    for (std::size_t d = 0; d < dirs.size(); ++d) tasks.emplace_back(r, d);
  }
  par::for_each_index(tasks.size(), opts.policy, [&](std::size_t k) {
    const auto [r, d] = tasks[k];
    ShellSample s;
    s.pi = pi0 + radii[r] * scale * dirs[d];
    try {
      const Process proc = family(s.pi);
      const pmp::Multipliers mult = pmp::solve_multipliers(P, proc);
      double dev = (mult.lambda - base.lambda).lpNorm<Eigen::Infinity>();
      if (base.mu.size() > 0)
        dev = std::max(dev, (mult.mu - base.mu).lpNorm<Eigen::Infinity>());
      s.deviation = dev;
      s.ok = true;
      s.status = "ok";
    } catch (const std::exception& e) {
      s.ok = false;
      s.status = std::string("out-of-neighborhood: ") + e.what();
    }
    scan.shells[r].samples[d] = std::move(s);
  });
  scan.finish();
  return scan;
}

AdjointScan adjoint_continuity_scan(const BolzaProblem& P, const SolutionFamily& family,
                                    const Vec& pi0, const std::vector<double>& radii,
                                    const ScanOptions& opts) {
  const Process proc0 = family(pi0);
  const pmp::Multipliers mult0 = pmp::solve_multipliers(P, proc0);
  const pmp::AdjointPath adj0 =
      pmp::adjoint_backward(P, proc0, 1.0, pmp::transversality_terminal(P, proc0, mult0));
  const auto dirs = shell_directions(opts.directions_per_shell, P.param_dim, opts.seed);
  const double scale = 1.0 + pi0.norm();

  AdjointScan scan;
  scan.pi0 = pi0;
  scan.radii = radii;
  scan.shells.assign(radii.size(), std::vector<AdjointShellSample>(dirs.size()));
  std::vector<std::pair<std::size_t, std::size_t>> tasks;
  for (std::size_t r = 0; r < radii.size(); ++r)
    for (std::size_t d = 0; d < dirs.size(); ++d) tasks.emplace_back(r, d);

  par::for_each_index(tasks.size(), opts.policy, [&](std::size_t k) {
    const auto [r, d] = tasks[k];
    AdjointShellSample s;
    s.pi = pi0 + radii[r] * scale * dirs[d];
    try {
      const Process proc = family(s.pi);
      const pmp::Multipliers mult = pmp::solve_multipliers(P, proc);
      const pmp::AdjointPath adj =
          pmp::adjoint_backward(P, proc, 1.0, pmp::transversality_terminal(P, proc, mult));
      s.sup_distance = sup_distance(adj.p.values(), adj0.p.values());
      s.terminal_distance = (adj.terminal - adj0.terminal).norm();
      // Gronwall-style diagnostics: integral mismatch of the adjoint ODE
      // coefficients between the two parameters.
      const Grid merged = merge_grids(proc.x.grid(), proc.u.grid());
      const auto& bp = merged.breakpoints();
      double psi_f = 0.0, psi_f0 = 0.0;
      for (std::size_t j = 0; j + 1 < bp.size(); ++j) {
        psi_f += quad::integrate_scalar(
            [&](double t) {
              return (P.f_x(t, proc.x.eval(t), proc.u.eval(t), s.pi) -
                      P.f_x(t, proc0.x.eval(t), proc0.u.eval(t), pi0))
                  .norm();
            },
            bp[j], bp[j + 1]);
        psi_f0 += quad::integrate_scalar(
            [&](double t) {
              return (P.f0_x(t, proc.x.eval(t), proc.u.eval(t), s.pi) -
                      P.f0_x(t, proc0.x.eval(t), proc0.u.eval(t), pi0))
                  .norm();
            },
            bp[j], bp[j + 1]);
      }
      s.psi_f = psi_f;
      s.psi_f0 = psi_f0;
      s.ok = true;
      s.status = "ok";
    } catch (const std::exception& e) {
      s.ok = false;
      s.status = std::string("out-of-neighborhood: ") + e.what();
    }
    scan.shells[r][d] = std::move(s);
  });

  scan.max_deviation.assign(radii.size(), 0.0);
  scan.monotone_decreasing = true;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < radii.size(); ++r) {
    bool ok = true;
    for (const auto& s : scan.shells[r]) {
      if (!s.ok) {
        ok = false;
        continue;
      }
      scan.max_deviation[r] = std::max(scan.max_deviation[r], s.sup_distance);
    }
    if (ok) {
      if (scan.max_deviation[r] > prev + 1e-15) scan.monotone_decreasing = false;
      prev = scan.max_deviation[r];
    }
  }
  return scan;
}

FrechetReport frechet_continuity_check(const BolzaProblem& P, const SolutionFamily& family,
                                       const Vec& pi0, const std::vector<double>& radii,
                                       const ScanOptions& opts) {
  const RowVec grad0 = envelope_gradient(P, family, pi0);
  const double v0 = value(P, family, pi0);
  const auto dirs = shell_directions(opts.directions_per_shell, P.param_dim, opts.seed);
  const double scale = 1.0 + pi0.norm();

  FrechetReport rep;
  rep.pi0 = pi0;
  rep.radii = radii;
  rep.gradient_deviation.assign(radii.size(), 0.0);
  rep.linearization_residual.assign(radii.size(), 0.0);

  std::vector<std::pair<std::size_t, std::size_t>> tasks;
  for (std::size_t r = 0; r < radii.size(); ++r)
    for (std::size_t d = 0; d < dirs.size(); ++d) tasks.emplace_back(r, d);
  std::vector<double> gdev(tasks.size(), 0.0), lres(tasks.size(), 0.0);
  par::for_each_index(tasks.size(), opts.policy, [&](std::size_t k) {
    const auto [r, d] = tasks[k];
    const Vec pik = pi0 + radii[r] * scale * dirs[d];
    const RowVec grad_k = envelope_gradient(P, family, pik);
    gdev[k] = (grad_k - grad0).lpNorm<Eigen::Infinity>();
    const double vk = value(P, family, pik);
    const Vec delta = pik - pi0;
    lres[k] = std::abs(vk - v0 - grad0.dot(delta)) / delta.norm();
  });
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    const auto [r, d] = tasks[k];
    rep.gradient_deviation[r] = std::max(rep.gradient_deviation[r], gdev[k]);
    rep.linearization_residual[r] = std::max(rep.linearization_residual[r], lres[k]);
  }
  rep.monotone = true;
  for (std::size_t r = 1; r < radii.size(); ++r) {
    if (rep.gradient_deviation[r] > rep.gradient_deviation[r - 1] + 1e-15 ||
        rep.linearization_residual[r] > rep.linearization_residual[r - 1] + 1e-15)
      rep.monotone = false;
  }
  return rep;
}

}  // namespace octool::envelope
