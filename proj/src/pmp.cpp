#include "octool/pmp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>

namespace octool::pmp {

namespace {

Vec terminal_state(const BolzaProblem& P, const Process& proc) {
  return proc.x.eval(P.horizon);
}

Vec terminal_control(const Process& proc, double T) { return proc.u.eval(T); }

// Composed family at T: rows e_alpha = grad g^alpha (or h^beta) times the
// control Jacobian of f. Row 0 of `lhs` corresponds to g^1.
struct ComposedFamily {
  Mat rows;     // (m+q) x mu
  RowVec rhs;   // -(grad g^0 . f_u + f0_u)
};

ComposedFamily composed_family(const BolzaProblem& P, const Process& proc) {
  const double T = P.horizon;
  const Vec xT = terminal_state(P, proc);
  const Vec uT = terminal_control(proc, T);
  const Mat fu = P.f_u(T, xT, uT, proc.pi);
  const RowVec f0u = P.f0_u(T, xT, uT, proc.pi);
  const int m = P.inequality_count(), q = P.equality_count();
  ComposedFamily fam;
  fam.rows.resize(m + q, P.control_dim);
  for (int i = 1; i <= m; ++i) fam.rows.row(i - 1) = P.g[i].grad_state(xT, proc.pi) * fu;
  for (int j = 0; j < q; ++j) fam.rows.row(m + j) = P.h[j].grad_state(xT, proc.pi) * fu;
  fam.rhs = -(P.g[0].grad_state(xT, proc.pi) * fu + f0u);
  return fam;
}

constexpr double kRankThresholdFactor = 1e-8;

// Nonnegative least squares, Lawson-Hanson active-set. Minimizes ||A x - b||
// subject to x >= 0. Sizes here are tiny.
Vec nnls(const Mat& A, const Vec& b, int max_iter = 200) {
  const int ncol = static_cast<int>(A.cols());
  Vec x = Vec::Zero(ncol);
  std::vector<bool> passive(ncol, false);
  for (int iter = 0; iter < max_iter; ++iter) {
    const Vec w = A.transpose() * (b - A * x);
    int best = -1;
    double best_w = 1e-12;
    for (int i = 0; i < ncol; ++i) {
      if (!passive[i] && w[i] > best_w) {
        best_w = w[i];
        best = i;
      }
    }
    if (best < 0) break;
    passive[best] = true;
    for (;;) {
      std::vector<int> idx;
      for (int i = 0; i < ncol; ++i)
        if (passive[i]) idx.push_back(i);
      if (idx.empty()) break;
      Mat Ap(A.rows(), idx.size());
      for (std::size_t k = 0; k < idx.size(); ++k) Ap.col(k) = A.col(idx[k]);
      const Vec zp = Ap.colPivHouseholderQr().solve(b);
      double min_z = zp.minCoeff();
      if (min_z > 0.0) {
        x.setZero();
        for (std::size_t k = 0; k < idx.size(); ++k) x[idx[k]] = zp[k];
        break;
      }
      // step toward zp until a passive variable hits zero
      double alpha = 1.0;
      for (std::size_t k = 0; k < idx.size(); ++k) {
        if (zp[k] <= 0.0) {
          const double xi = x[idx[k]];
          if (xi - zp[k] > 0.0) alpha = std::min(alpha, xi / (xi - zp[k]));
        }
      }
      for (std::size_t k = 0; k < idx.size(); ++k)
        x[idx[k]] += alpha * (zp[k] - x[idx[k]]);
      for (std::size_t k = 0; k < idx.size(); ++k) {
        if (x[idx[k]] <= 1e-14) {
          x[idx[k]] = 0.0;
          passive[idx[k]] = false;
        }
      }
    }
  }
  return x;
}

}  // namespace

AdjointPath adjoint_backward(const BolzaProblem& P, const Process& proc, double lambda0,
                             const Vec& pT, const ode::Options& opts) {
  const Grid grid = merge_grids(proc.x.grid(), proc.u.grid());
  auto xs = std::make_shared<const PiecewiseFn>(proc.x.values());
  auto us = std::make_shared<const PiecewiseFn>(proc.u);
  std::vector<std::size_t> ox(grid.segment_count()), ou(grid.segment_count());
  const auto& bp = grid.breakpoints();
  for (std::size_t j = 0; j + 1 < bp.size(); ++j) {
    const double mid = 0.5 * (bp[j] + bp[j + 1]);
    ox[j] = proc.x.grid().locate(mid);
    ou[j] = proc.u.grid().locate(mid);
  }
  auto oxp = std::make_shared<const std::vector<std::size_t>>(std::move(ox));
  auto oup = std::make_shared<const std::vector<std::size_t>>(std::move(ou));
  const auto f0x = P.f0_x;
  const auto fx = P.f_x;
  const Vec pi = proc.pi;
  const ode::SegmentRhs rhs = [=](std::size_t seg, double t, const Vec& p) -> Vec {
    const Vec xv = xs->eval_segment((*oxp)[seg], t);
    const Vec uv = us->eval_segment((*oup)[seg], t);
    return -(lambda0 * f0x(t, xv, uv, pi).transpose() + fx(t, xv, uv, pi).transpose() * p);
  };
  PiecewiseC1Fn p = ode::solve_segmented_backward(rhs, pT, grid, opts);
  return AdjointPath{std::move(p), pT};
}

Multipliers solve_multipliers(const BolzaProblem& P, const Process& proc, double tol) {
  const int m = P.inequality_count(), q = P.equality_count();
  const ComposedFamily fam = composed_family(P, proc);
  Multipliers out;
  out.lambda = Vec::Zero(m + 1);
  out.lambda[0] = 1.0;
  out.mu = Vec::Zero(q);
  out.normalized = true;

  if (m + q == 0) {
    const double residual = fam.rhs.norm();
    if (residual > tol * (1.0 + residual))
      throw std::domain_error(P.name +
                              ": stationarity at T violated with no terminal constraints "
                              "(residual " +
                              std::to_string(residual) + ")");
    return out;
  }

  const Mat E = fam.rows.transpose();  // mu x (m+q), columns e_alpha
  Eigen::JacobiSVD<Mat> svd(E, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec sv = svd.singularValues();
  const double sigma_max = sv.size() > 0 ? sv[0] : 0.0;
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > kRankThresholdFactor * sigma_max) ++rank;
  if (rank < m + q)
    throw RankDeficiencyError(P.name + ": composed terminal-gradient family is rank deficient",
                              sv);

  const Vec rhs = fam.rhs.transpose();
  const Vec sol = svd.solve(rhs);
  const double residual = (E * sol - rhs).norm();
  if (residual > tol * (1.0 + rhs.norm()))
    throw std::domain_error(P.name + ": multiplier system residual too large (" +
                            std::to_string(residual) + ")");
  for (int i = 0; i < m; ++i) {
    if (sol[i] < -tol)
      throw std::domain_error(P.name + ": inequality multiplier lambda_" + std::to_string(i + 1) +
                              " is negative (" + std::to_string(sol[i]) + ")");
    out.lambda[i + 1] = sol[i];
  }
  for (int j = 0; j < q; ++j) out.mu[j] = sol[m + j];
  return out;
}

Multipliers solve_multipliers_sphere(const BolzaProblem& P, const Process& proc) {
  const int m = P.inequality_count(), q = P.equality_count();
  const ComposedFamily fam = composed_family(P, proc);
  // Stationarity columns for (lambda_0, lambda, mu); smallest right singular
  // vector minimizes the residual on the sphere.
  Mat A(P.control_dim, 1 + m + q);
  A.col(0) = -fam.rhs.transpose();
  for (int k = 0; k < m + q; ++k) A.col(1 + k) = fam.rows.row(k).transpose();
  Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeFullV);
  Vec v = svd.matrixV().col(A.cols() - 1);
  // Tie-break: first nonzero entry positive, then l1 normalization.
  for (int i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > 1e-12) {
      if (v[i] < 0.0) v = -v;
      break;
    }
  }
  const double l1 = v.lpNorm<1>();
  if (l1 > 0.0) v /= l1;
  Multipliers out;
  out.lambda = v.head(m + 1);
  out.mu = v.tail(q);
  out.normalized = false;
  return out;
}

QualificationReport check_qualification(const BolzaProblem& P, const Process& proc,
                                        QualificationMode mode, double active_set_tol) {
  const int m = P.inequality_count(), q = P.equality_count();
  const Vec xT = terminal_state(P, proc);
  QualificationReport rep;
  rep.mode = mode;

  for (int a = 1; a <= m; ++a)
    if (std::abs(P.g[a].value(xT, proc.pi)) <= active_set_tol) rep.active_inequalities.push_back(a);

  if (m + q == 0) {
    rep.passed = true;
    rep.detail = "vacuous: no terminal constraints";
    return rep;
  }

  if (mode == QualificationMode::LI) {
    const ComposedFamily fam = composed_family(P, proc);
    rep.needs_interior_control =
        P.control_box.is_box() &&
        !P.control_box.contains(terminal_control(proc, P.horizon), -1e-12);
    Eigen::JacobiSVD<Mat> svd(fam.rows, Eigen::ComputeThinU | Eigen::ComputeThinV);
    rep.singular_values = svd.singularValues();
    const double sigma_max = rep.singular_values[0];
    rep.sigma_min = rep.singular_values[rep.singular_values.size() - 1];
    int rank = 0;
    for (int i = 0; i < rep.singular_values.size(); ++i)
      if (rep.singular_values[i] > kRankThresholdFactor * sigma_max) ++rank;
    rep.passed = (rank == m + q);
    rep.detail = rep.passed ? "composed family linearly free" : "composed family rank deficient";
    return rep;
  }

  // (QC, i): gather grad g^alpha for alpha >= i (alpha = 0 always counts,
  // alpha >= 1 only when active) plus all grad h^beta; ask whether a
  // nontrivial combination with nonnegative g-coefficients vanishes.
  const int first = mode == QualificationMode::QC0 ? 0 : 1;
  std::vector<RowVec> gs;
  for (int a = first; a <= m; ++a) {
    if (a == 0 || std::abs(P.g[a].value(xT, proc.pi)) <= active_set_tol)
      gs.push_back(P.g[a].grad_state(xT, proc.pi));
  }
  std::vector<RowVec> hs;
  for (int b = 0; b < q; ++b) hs.push_back(P.h[b].grad_state(xT, proc.pi));

  const int rows = static_cast<int>(gs.size() + hs.size());
  if (rows == 0) {
    rep.passed = true;
    rep.detail = "vacuous: no active terminal gradients";
    return rep;
  }
  Mat M(rows, P.state_dim);
  for (std::size_t i = 0; i < gs.size(); ++i) M.row(i) = gs[i];
  for (std::size_t j = 0; j < hs.size(); ++j) M.row(gs.size() + j) = hs[j];
  Eigen::JacobiSVD<Mat> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  rep.singular_values = svd.singularValues();
  const double sigma_max = rep.singular_values[0];
  rep.sigma_min = rep.singular_values[rep.singular_values.size() - 1];
  int rank = 0;
  for (int i = 0; i < rep.singular_values.size(); ++i)
    if (rep.singular_values[i] > kRankThresholdFactor * sigma_max) ++rank;
  if (rank == rows) {
    rep.passed = true;
    rep.detail = "active gradients linearly independent";
    return rep;
  }

  // Rank deficient: check for an equality-only annihilator first.
  if (!hs.empty()) {
    Mat Mh(hs.size(), P.state_dim);
    for (std::size_t j = 0; j < hs.size(); ++j) Mh.row(j) = hs[j];
    Eigen::JacobiSVD<Mat> svdh(Mh, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vec sh = svdh.singularValues();
    int rank_h = 0;
    for (int i = 0; i < sh.size(); ++i)
      if (sh[i] > kRankThresholdFactor * std::max(sigma_max, sh[0])) ++rank_h;
    if (rank_h < static_cast<int>(hs.size())) {
      rep.passed = false;
      rep.detail = "equality gradients alone admit a nontrivial annihilator";
      return rep;
    }
  }

  // For each candidate g row, ask whether -grad g^a lies in the cone of the
  // other g rows plus the span of the h rows (nonnegative least squares on
  // the orthogonal complement of span{h}).
  Mat Hperp = Mat::Identity(P.state_dim, P.state_dim);
  if (!hs.empty()) {
    Mat Mh(hs.size(), P.state_dim);
    for (std::size_t j = 0; j < hs.size(); ++j) Mh.row(j) = hs[j];
    const Mat Mt = Mh.transpose();  // n x q
    Hperp -= Mt * (Mh * Mt).partialPivLu().solve(Mh);
  }
  const double scale = std::max(1.0, sigma_max);
  for (std::size_t pick = 0; pick < gs.size(); ++pick) {
    const Vec target = -(Hperp * gs[pick].transpose());
    Mat cone(P.state_dim, gs.size() - 1);
    int c = 0;
    for (std::size_t kk = 0; kk < gs.size(); ++kk) {
      if (kk == pick) continue;
      cone.col(c++) = Hperp * gs[kk].transpose();
    }
    Vec coeff;
    double resid;
    if (cone.cols() == 0) {
      resid = target.norm();
    } else {
      coeff = nnls(cone, target);
      resid = (cone * coeff - target).norm();
    }
    if (resid <= 1e-10 * scale) {
      rep.passed = false;
      rep.detail = "nonnegative combination of active gradients vanishes";
      return rep;
    }
  }
  rep.passed = true;
  rep.detail = "rank deficiency not realizable with nonnegative coefficients";
  return rep;
}

std::vector<double> control_surjectivity_scan(const BolzaProblem& P, const Process& proc,
                                              int grid_points) {
  std::vector<double> candidates;
  for (int k = 0; k <= grid_points; ++k) {
    const double t = P.horizon * k / static_cast<double>(grid_points);
    const Vec xv = proc.x.eval(t);
    const Vec uv = proc.u.eval(t);
    const Mat fu = P.f_u(t, xv, uv, proc.pi);
    Eigen::JacobiSVD<Mat> svd(fu);
    const Vec sv = svd.singularValues();
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
      if (sv[i] > kRankThresholdFactor * sv[0]) ++rank;
    if (rank == P.state_dim) candidates.push_back(t);
  }
  return candidates;
}

Vec transversality_terminal(const BolzaProblem& P, const Process& proc,
                            const Multipliers& mult) {
  const Vec xT = terminal_state(P, proc);
  RowVec acc = RowVec::Zero(P.state_dim);
  for (int a = 0; a <= P.inequality_count(); ++a)
    acc += mult.lambda[a] * P.g[a].grad_state(xT, proc.pi);
  for (int b = 0; b < P.equality_count(); ++b)
    acc += mult.mu[b] * P.h[b].grad_state(xT, proc.pi);
  return acc.transpose();
}

namespace {

struct SamplePoint {
  double t;
  std::size_t ix, iu, ip;  // owner segments in x, u, p grids
};

std::vector<SamplePoint> sample_points(const Process& proc, const PiecewiseC1Fn& p,
                                       int per_segment) {
  const Grid merged = merge_grids(merge_grids(proc.x.grid(), proc.u.grid()), p.grid());
  std::vector<SamplePoint> pts;
  const auto& bp = merged.breakpoints();
  for (std::size_t j = 0; j + 1 < bp.size(); ++j) {
    const double mid = 0.5 * (bp[j] + bp[j + 1]);
    const std::size_t ix = proc.x.grid().locate(mid);
    const std::size_t iu = proc.u.grid().locate(mid);
    const std::size_t ip = p.grid().locate(mid);
    for (int k = 0; k <= per_segment; ++k) {
      const double t = bp[j] + (bp[j + 1] - bp[j]) * k / static_cast<double>(per_segment);
      pts.push_back(SamplePoint{t, ix, iu, ip});
    }
  }
  return pts;
}

// Gradient ascent of zeta -> H(t, x, zeta, p) with optional box projection.
Vec ascend_control(const BolzaProblem& P, double t, const Vec& xv, const Vec& pv, const Vec& pi,
                   double lambda0, Vec zeta, double scale) {
  const auto grad = [&](const Vec& z) -> Vec {
    return (lambda0 * P.f0_u(t, xv, z, pi) + pv.transpose() * P.f_u(t, xv, z, pi)).transpose();
  };
  const auto value = [&](const Vec& z) {
    return lambda0 * P.f0(t, xv, z, pi) + pv.dot(P.f(t, xv, z, pi));
  };
  double step = 0.5 * scale;
  double fz = value(zeta);
  for (int it = 0; it < 60; ++it) {
    const Vec gr = grad(zeta);
    if (gr.norm() < 1e-12 * (1.0 + std::abs(fz))) break;
    Vec trial = P.control_box.clamp(zeta + step * gr);
    double ft = value(trial);
    int bt = 0;
    while (ft < fz && bt++ < 30) {
      step *= 0.5;
      trial = P.control_box.clamp(zeta + step * gr);
      ft = value(trial);
    }
    if (ft <= fz) break;
    zeta = trial;
    fz = ft;
    step *= 1.5;
    if (zeta.norm() > 1e6 * (1.0 + scale)) break;  // unbounded ascent; report as found
  }
  return zeta;
}

}  // namespace

bool PMPCertificate::all_passed() const {
  if (degenerate) return false;
  for (const auto& [name, c] : conditions)
    if (c.verdict == Verdict::Fail) return false;
  return true;
}

bool PMPCertificate::any_failed() const {
  for (const auto& [name, c] : conditions)
    if (c.verdict == Verdict::Fail) return true;
  return false;
}

PMPCertificate verify_certificate(const BolzaProblem& P, const Process& proc,
                                  const Multipliers& mult, const AdjointPath& adjoint,
                                  const VerifyOptions& opts) {
  PMPCertificate cert;
  cert.multipliers = mult;
  cert.adjoint = adjoint;
  cert.options = opts;
  cert.degenerate = !mult.normalized;
  const double lambda0 = mult.lambda[0];
  const double T = P.horizon;
  const Vec xT = terminal_state(P, proc);

  const auto set = [&](const std::string& key, double residual, const std::string& detail = "") {
    ConditionResult c;
    c.residual = residual;
    c.tolerance = opts.tol;
    c.verdict = residual <= opts.tol ? Verdict::Pass : Verdict::Fail;
    c.detail = detail;
    cert.conditions[key] = c;
  };

  // (NN) nonnullity of the multiplier vector.
  {
    const double magnitude =
        std::max(mult.lambda.lpNorm<Eigen::Infinity>(),
                 mult.mu.size() > 0 ? mult.mu.lpNorm<Eigen::Infinity>() : 0.0);
    set("NN", magnitude > 1e-14 ? 0.0 : 1.0, "max |multiplier| = " + std::to_string(magnitude));
  }

  // (Si) signs.
  set("Si", std::max(0.0, -mult.lambda.minCoeff()));

  // (Sl) complementary slackness.
  {
    double worst = 0.0;
    for (int a = 1; a <= P.inequality_count(); ++a)
      worst = std::max(worst, std::abs(mult.lambda[a] * P.g[a].value(xT, proc.pi)));
    set("Sl", worst);
  }

  // (TC) transversality.
  set("TC", (transversality_terminal(P, proc, mult) - adjoint.p.eval(T)).norm());

  const auto pts = sample_points(proc, adjoint.p, opts.time_samples_per_segment);

  // (AE) adjoint collocation residual.
  {
    const PiecewiseFn dp = extended_derivative(adjoint.p);
    double worst = 0.0;
    for (const auto& s : pts) {
      const Vec xv = proc.x.values().eval_segment(s.ix, s.t);
      const Vec uv = proc.u.eval_segment(s.iu, s.t);
      const Vec pv = adjoint.p.values().eval_segment(s.ip, s.t);
      const Vec want = -(lambda0 * P.f0_x(s.t, xv, uv, proc.pi).transpose() +
                         P.f_x(s.t, xv, uv, proc.pi).transpose() * pv);
      worst = std::max(worst, (dp.eval_segment(s.ip, s.t) - want).norm());
    }
    set("AE", worst);
  }

  // (MP) pointwise maximization: deterministic control grid (box case) plus
  // multistart ascent; the verdict means "no counterexample found".
  {
    std::vector<double> violation(pts.size(), 0.0);
    const int mu = P.control_dim;
    // Deterministic grid for boxes, capped in total size.
    std::vector<Vec> grid;
    if (P.control_box.is_box()) {
      int per_dim = opts.control_grid;
      double total = std::pow(static_cast<double>(per_dim), mu);
      while (total > 4096.0 && per_dim > 2) {
        per_dim /= 2;
        total = std::pow(static_cast<double>(per_dim), mu);
      }
      std::vector<int> idx(mu, 0);
      const Vec lo = *P.control_box.lower, hi = *P.control_box.upper;
      for (;;) {
        Vec z(mu);
        for (int d = 0; d < mu; ++d)
          z[d] = lo[d] + (hi[d] - lo[d]) * idx[d] / static_cast<double>(per_dim - 1);
        grid.push_back(z);
        int d = 0;
        while (d < mu && ++idx[d] == per_dim) idx[d++] = 0;
        if (d == mu) break;
      }
    }
    par::for_each_index(pts.size(), opts.policy, [&](std::size_t k) {
      const auto& s = pts[k];
      const Vec xv = proc.x.values().eval_segment(s.ix, s.t);
      const Vec uv = proc.u.eval_segment(s.iu, s.t);
      const Vec pv = adjoint.p.values().eval_segment(s.ip, s.t);
      const auto value = [&](const Vec& z) {
        return lambda0 * P.f0(s.t, xv, z, proc.pi) + pv.dot(P.f(s.t, xv, z, proc.pi));
      };
      const double h_ref = value(uv);
      double best = h_ref;
      Vec best_z = uv;
      for (const Vec& z : grid) {
        const double hv = value(z);
        if (hv > best) {
          best = hv;
          best_z = z;
        }
      }
      const double scale = 1.0 + uv.norm();
      static const double kOffsets[] = {0.0, 1.0, -1.0, 0.5, -0.5, 2.0, -2.0, 4.0};
      for (int a = 0; a < opts.ascent_starts; ++a) {
        Vec start = uv;
        start[a % mu] += kOffsets[a % 8] * scale;
        const Vec z = ascend_control(P, s.t, xv, pv, proc.pi, lambda0,
                                     P.control_box.clamp(start), scale);
        const double hv = value(z);
        if (hv > best) best = hv;
      }
      violation[k] = std::max(0.0, best - h_ref);
    });
    const double worst = violation.empty() ? 0.0 : *std::max_element(violation.begin(),
                                                                     violation.end());
    set("MP", worst,
        worst <= opts.tol ? "no counterexample found (grid + multistart ascent)"
                          : "ascent found an improving control value");
  }

  // (CH) continuity of t -> H(t, x(t), u(t), p(t)) across breakpoints.
  {
    const Grid merged = merge_grids(merge_grids(proc.x.grid(), proc.u.grid()),
                                    adjoint.p.grid());
    const auto& bp = merged.breakpoints();
    double worst = 0.0;
    const Hamiltonian H{&P, lambda0};
    for (std::size_t j = 1; j + 1 < bp.size(); ++j) {
      const double tau = bp[j];
      const double left = hamiltonian_eval(H, tau, proc.x.eval(tau),
                                           proc.u.eval(tau, Side::Left),
                                           adjoint.p.values().eval(tau, Side::Left), proc.pi);
      const double right = hamiltonian_eval(H, tau, proc.x.eval(tau),
                                            proc.u.eval(tau, Side::Right),
                                            adjoint.p.values().eval(tau, Side::Right), proc.pi);
      worst = std::max(worst, std::abs(right - left));
    }
    set("CH", worst);
  }

  // (dH) slope of the Hamiltonian along the process vs its explicit time
  // partial; needs time partials of the data.
  if (opts.check_hamiltonian_slope && P.has_time_partials()) {
    const Hamiltonian H{&P, lambda0};
    double worst = 0.0;
    const double hstep = 1e-5 * T;
    for (const auto& s : pts) {
      const auto hbar = [&](double t) {
        return hamiltonian_eval(H, t, proc.x.values().eval_segment(s.ix, t),
                                proc.u.eval_segment(s.iu, t),
                                adjoint.p.values().eval_segment(s.ip, t), proc.pi);
      };
      const double lo = std::max(0.0, s.t - hstep), hi = std::min(T, s.t + hstep);
      if (hi - lo < 0.5 * hstep) continue;
      const double slope = (hbar(hi) - hbar(lo)) / (hi - lo);
      const Vec xv = proc.x.values().eval_segment(s.ix, s.t);
      const Vec uv = proc.u.eval_segment(s.iu, s.t);
      const Vec pv = adjoint.p.values().eval_segment(s.ip, s.t);
      const double partial = lambda0 * P.f0_t(s.t, xv, uv, proc.pi) +
                             pv.dot(P.f_t(s.t, xv, uv, proc.pi));
      worst = std::max(worst, std::abs(slope - partial));
    }
    set("dH", worst);
  } else {
    ConditionResult c;
    c.verdict = Verdict::NotChecked;
    c.tolerance = opts.tol;
    c.detail = "time partials unavailable";
    cert.conditions["dH"] = c;
  }

  return cert;
}

PMPCertificate certify(const BolzaProblem& P, const Process& proc, const VerifyOptions& opts) {
  Multipliers mult;
  bool degenerate = false;
  std::string note;
  if (P.inequality_count() + P.equality_count() == 0) {
    // No terminal constraints: lambda = (1) is the normalized choice; any
    // stationarity defect shows up as an (MP) failure, not a solve failure.
    mult.lambda = Vec::Ones(1);
    mult.mu = Vec::Zero(0);
    mult.normalized = true;
  } else {
    try {
      mult = solve_multipliers(P, proc, opts.tol);
    } catch (const std::exception& e) {
      mult = solve_multipliers_sphere(P, proc);
      degenerate = true;
      note = e.what();
    }
  }
  const Vec pT = transversality_terminal(P, proc, mult);
  const AdjointPath adj = adjoint_backward(P, proc, mult.lambda[0], pT);
  PMPCertificate cert = verify_certificate(P, proc, mult, adj, opts);
  cert.degenerate = cert.degenerate || degenerate;
  if (!note.empty()) {
    ConditionResult c;
    c.verdict = Verdict::NotChecked;
    c.tolerance = opts.tol;
    c.detail = "normalized route failed: " + note;
    cert.conditions["normalization"] = c;
  }
  cert.qualification.push_back(check_qualification(P, proc, QualificationMode::LI,
                                                   opts.active_set_tol));
  cert.qualification.push_back(check_qualification(P, proc, QualificationMode::QC1,
                                                   opts.active_set_tol));
  return cert;
}

NonvanishingReport nonvanishing_scan(const PMPCertificate& cert, NonvanishingMode mode,
                                     int samples) {
  NonvanishingReport rep;
  if (!cert.adjoint) {
    rep.degenerate = true;
    return rep;
  }
  const PiecewiseC1Fn& p = cert.adjoint->p;
  const double T = p.grid().horizon();
  const double lambda0 = cert.multipliers.lambda[0];
  double best = std::numeric_limits<double>::infinity();
  double at = 0.0;
  for (int k = 0; k <= samples; ++k) {
    const double t = T * k / static_cast<double>(samples);
    const double pn = p.eval(t).norm();
    const double v = mode == NonvanishingMode::Lambda0AndAdjoint ? std::max(lambda0, pn) : pn;
    if (v < best) {
      best = v;
      at = t;
    }
  }
  rep.minimum = best;
  rep.argmin_time = at;
  rep.degenerate = best <= 1e-12;
  return rep;
}

namespace {

// Pointwise control recovery for the shooting sweep.
Vec recover_control(const BolzaProblem& P, double t, const Vec& xv, const Vec& pv, const Vec& pi,
                    const Vec& hint) {
  if (P.control_from_adjoint) return P.control_from_adjoint(t, xv, pv, pi);
  // Newton ascent on the control gradient of H with lambda0 = 1.
  Vec z = hint;
  const int mu = P.control_dim;
  for (int it = 0; it < 40; ++it) {
    const Vec gr =
        (P.f0_u(t, xv, z, pi) + pv.transpose() * P.f_u(t, xv, z, pi)).transpose();
    if (gr.norm() < 1e-13) break;
    // FD Jacobian of the gradient.
    Mat Hm(mu, mu);
    const double hs = 1e-6 * (1.0 + z.norm());
    for (int d = 0; d < mu; ++d) {
      Vec zp = z, zm = z;
      zp[d] += hs;
      zm[d] -= hs;
      const Vec gp = (P.f0_u(t, xv, zp, pi) + pv.transpose() * P.f_u(t, xv, zp, pi)).transpose();
      const Vec gm = (P.f0_u(t, xv, zm, pi) + pv.transpose() * P.f_u(t, xv, zm, pi)).transpose();
      Hm.col(d) = (gp - gm) / (2.0 * hs);
    }
    const Vec step = Hm.partialPivLu().solve(-gr);
    if (!step.allFinite()) break;
    z += step;
    if (step.norm() < 1e-14 * (1.0 + z.norm())) break;
  }
  return P.control_box.clamp(z);
}

void concavity_probe(const BolzaProblem& P, double t, const Vec& xv, const Vec& pv,
                     const Vec& pi, const Vec& zeta) {
  const double hs = 1e-4 * (1.0 + zeta.norm());
  const auto value = [&](const Vec& z) {
    return P.f0(t, xv, z, pi) + pv.dot(P.f(t, xv, z, pi));
  };
  for (int d = 0; d < P.control_dim; ++d) {
    Vec zp = zeta, zm = zeta;
    zp[d] += hs;
    zm[d] -= hs;
    const double second = (value(zp) - 2.0 * value(zeta) + value(zm)) / (hs * hs);
    if (second > -1e-10)
      throw UnsupportedProblemError(
          P.name + ": Hamiltonian not strictly concave in the control (second difference " +
          std::to_string(second) + ")");
  }
}

}  // namespace

ShootingResult shooting_solve(const BolzaProblem& P, const Vec& pi, const Vec& p0_guess,
                              const Vec& mu_guess, const ShootingOptions& opts) {
  if (P.inequality_count() > 0)
    throw UnsupportedProblemError(P.name +
                                  ": shooting supports equality-constrained instances only");
  const int n = P.state_dim, q = P.equality_count();
  if (p0_guess.size() != n || mu_guess.size() != q)
    throw std::domain_error(P.name + ": shooting guess dimension mismatch");

  const Grid grid = Grid::trivial(P.horizon);
  ode::Options oopts = opts.ode;
  if (P.state_guard && !oopts.state_guard) {
    // guard applies to the state block only; extend to (x, p)
    const double inf = std::numeric_limits<double>::infinity();
    Vec lo(2 * n), hi(2 * n);
    lo.head(n) = P.state_guard->first;
    hi.head(n) = P.state_guard->second;
    lo.tail(n).setConstant(-inf);
    hi.tail(n).setConstant(inf);
    oopts.state_guard = std::make_pair(lo, hi);
  }

  const auto sweep = [&](const Vec& p0) -> PiecewiseC1Fn {
    Vec y0(2 * n);
    y0.head(n) = P.initial_state;
    y0.tail(n) = p0;
    const ode::Rhs rhs = [&P, &pi, n](double t, const Vec& y) -> Vec {
      const Vec xv = y.head(n), pv = y.tail(n);
      const Vec uv = recover_control(P, t, xv, pv, pi, Vec::Zero(P.control_dim));
      Vec dy(2 * n);
      dy.head(n) = P.f(t, xv, uv, pi);
      dy.tail(n) = -(P.f0_x(t, xv, uv, pi).transpose() +
                     P.f_x(t, xv, uv, pi).transpose() * pv);
      return dy;
    };
    return ode::solve(rhs, y0, grid, oopts);
  };

  const auto residual = [&](const Vec& unknowns) -> Vec {
    const Vec p0 = unknowns.head(n);
    const Vec muv = unknowns.tail(q);
    const PiecewiseC1Fn traj = sweep(p0);
    const Vec yT = traj.eval(P.horizon);
    const Vec xTv = yT.head(n), pTv = yT.tail(n);
    Vec r(q + n);
    for (int j = 0; j < q; ++j) r[j] = P.h[j].value(xTv, pi);
    RowVec tv = P.g[0].grad_state(xTv, pi);
    for (int j = 0; j < q; ++j) tv += muv[j] * P.h[j].grad_state(xTv, pi);
    r.tail(n) = pTv - tv.transpose();
    return r;
  };

  Vec unknowns(n + q);
  unknowns.head(n) = p0_guess;
  unknowns.tail(q) = mu_guess;

  concavity_probe(P, 0.0, P.initial_state, p0_guess, pi,
                  recover_control(P, 0.0, P.initial_state, p0_guess, pi,
                                  Vec::Zero(P.control_dim)));

  std::vector<double> history;
  Vec r = residual(unknowns);
  history.push_back(r.norm());
  for (int iter = 0; iter < opts.max_iterations && r.norm() > opts.residual_tol; ++iter) {
    Mat J(r.size(), unknowns.size());
    for (int c = 0; c < unknowns.size(); ++c) {
      Vec up = unknowns;
      const double hs = opts.fd_step * (1.0 + std::abs(unknowns[c]));
      up[c] += hs;
      J.col(c) = (residual(up) - r) / hs;
    }
    const Vec step = J.colPivHouseholderQr().solve(-r);
    double alpha = 1.0;
    Vec trial;
    Vec rt;
    bool improved = false;
    for (int bt = 0; bt < opts.max_backtracks; ++bt) {
      trial = unknowns + alpha * step;
      try {
        rt = residual(trial);
      } catch (const IntegrationError&) {
        alpha *= 0.5;
        continue;
      }
      if (rt.norm() <= (1.0 - 1e-4 * alpha) * r.norm()) {
        improved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!improved) {
      history.push_back(r.norm());
      throw NoConvergenceError(P.name + ": shooting stalled (residual " +
                                   std::to_string(r.norm()) + ")",
                               history);
    }
    unknowns = trial;
    r = rt;
    history.push_back(r.norm());
  }
  if (r.norm() > opts.residual_tol)
    throw NoConvergenceError(P.name + ": shooting did not converge (residual " +
                                 std::to_string(r.norm()) + ")",
                             history);

  // Assemble the result from the final sweep.
  const Vec p0 = unknowns.head(n);
  auto traj = std::make_shared<const PiecewiseC1Fn>(sweep(p0));
  auto dtraj = std::make_shared<const PiecewiseFn>(extended_derivative(*traj));
  const Grid tg = traj->grid();

  auto Pcopy = std::make_shared<const BolzaProblem>(P);
  std::vector<PiecewiseFn::Segment> xsegs, dxsegs, psegs, dpsegs, usegs;
  for (std::size_t j = 0; j < tg.segment_count(); ++j) {
    xsegs.push_back([traj, j, n](double t) -> Vec {
      return traj->values().eval_segment(j, t).head(n);
    });
    dxsegs.push_back([dtraj, j, n](double t) -> Vec { return dtraj->eval_segment(j, t).head(n); });
    psegs.push_back([traj, j, n](double t) -> Vec {
      return traj->values().eval_segment(j, t).tail(n);
    });
    dpsegs.push_back([dtraj, j, n](double t) -> Vec { return dtraj->eval_segment(j, t).tail(n); });
    usegs.push_back([traj, j, n, Pcopy, pi](double t) -> Vec {
      const Vec y = traj->values().eval_segment(j, t);
      return recover_control(*Pcopy, t, y.head(n), y.tail(n), pi, Vec::Zero(Pcopy->control_dim));
    });
  }

  ShootingResult out{
      Process{PiecewiseC1Fn(tg, xsegs, dxsegs, n),
              PiecewiseFn(tg, std::move(usegs), P.control_dim), pi},
      Multipliers{},
      AdjointPath{PiecewiseC1Fn(tg, psegs, dpsegs, n), traj->eval(P.horizon).tail(n)},
      history};
  out.multipliers.lambda = Vec::Ones(1);
  out.multipliers.mu = unknowns.tail(q);
  out.multipliers.normalized = true;
  return out;
}

}  // namespace octool::pmp
