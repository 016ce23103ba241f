#include "octool/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <sstream>

namespace octool::flow {

namespace {

// Owner segment index in `owner` grid for every segment of `fine`.
std::vector<std::size_t> owner_map(const Grid& fine, const Grid& owner) {
  std::vector<std::size_t> map(fine.segment_count());
  const auto& bp = fine.breakpoints();
  for (std::size_t j = 0; j + 1 < bp.size(); ++j)
    map[j] = owner.locate(0.5 * (bp[j] + bp[j + 1]));
  return map;
}

ode::Options with_problem_guard(const BolzaProblem& P, ode::Options opts) {
  if (P.state_guard && !opts.state_guard) opts.state_guard = P.state_guard;
  return opts;
}

}  // namespace

SpikeList::SpikeList(std::vector<Spike> spikes, double horizon)
: spikes_(std::move(spikes)), horizon_(horizon) {
  if (spikes_.empty()) throw std::invalid_argument("SpikeList: at least one spike required");
  if (!(horizon_ > 0.0)) throw std::invalid_argument("SpikeList: horizon must be positive");
  for (std::size_t i = 0; i < spikes_.size(); ++i) {
    if (!(spikes_[i].time > 0.0 && spikes_[i].time < horizon_))
      throw std::invalid_argument("SpikeList: spike times must lie strictly inside ]0, T[");
    if (i > 0 && spikes_[i].time < spikes_[i - 1].time)
      throw std::invalid_argument("SpikeList: spike times must be nondecreasing");
  }
  min_gap_ = std::numeric_limits<double>::infinity();
  const double tol = Grid::dedup_tolerance(horizon_);
  for (std::size_t i = 0; i + 1 < spikes_.size(); ++i) {
    const double gap = spikes_[i + 1].time - spikes_[i].time;
    if (gap > tol) min_gap_ = std::min(min_gap_, gap);
  }
}

bool SpikeList::times_equal(std::size_t i, std::size_t j) const {
  return std::abs(spikes_[i].time - spikes_[j].time) <= Grid::dedup_tolerance(horizon_);
}

NeedleVariation::NeedleVariation(SpikeList spikes, Vec amplitudes)
: spikes_(std::move(spikes)), amplitudes_(std::move(amplitudes)) {
  const std::size_t N = spikes_.size();
  if (static_cast<std::size_t>(amplitudes_.size()) != N)
    throw std::invalid_argument("NeedleVariation: one amplitude per spike required");
  if (amplitudes_.size() > 0 && amplitudes_.minCoeff() < 0.0)
    throw std::domain_error("NeedleVariation: amplitudes must be nonnegative");
  if (total_amplitude() > spikes_.min_gap())
    throw std::domain_error("NeedleVariation: ||a||_1 exceeds the minimum spike gap");

  const double tol = Grid::dedup_tolerance(spikes_.horizon());
  offsets_.assign(N, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (spikes_.times_equal(i, j)) offsets_[i] += amplitudes_[j];
    }
  }
  intervals_.reserve(N);
  for (std::size_t i = 0; i < N; ++i) {
    NeedleInterval iv;
    iv.start = spikes_.spikes()[i].time + offsets_[i];
    iv.end = iv.start + amplitudes_[i];
    iv.empty = amplitudes_[i] < tol;
    intervals_.push_back(iv);
  }
  // Disjointness and containment are consequences of the amplitude bound for
  // interior spikes but not near T; both are enforced here.
  std::vector<NeedleInterval> live;
  for (const auto& iv : intervals_)
    if (!iv.empty) live.push_back(iv);
  std::sort(live.begin(), live.end(),
            [](const NeedleInterval& a, const NeedleInterval& b) { return a.start < b.start; });
  for (std::size_t i = 0; i + 1 < live.size(); ++i) {
    if (live[i + 1].start < live[i].end - tol)
      throw std::domain_error("NeedleVariation: needle intervals overlap");
  }
  if (!live.empty() && (live.front().start < 0.0 || live.back().end > spikes_.horizon()))
    throw std::domain_error("NeedleVariation: needle intervals leave [0, T]");
}

PiecewiseFn needle_control(const PiecewiseFn& u0, const NeedleVariation& nv) {
  if (u0.grid().horizon() != nv.spikes().horizon())
    throw std::domain_error("needle_control: horizon mismatch");
  std::vector<double> endpoints;
  for (std::size_t i = 0; i < nv.spikes().size(); ++i) {
    const auto& iv = nv.interval(i);
    if (!iv.empty) {
      endpoints.push_back(iv.start);
      endpoints.push_back(iv.end);
    }
  }
  if (endpoints.empty()) return u0;

  const Grid grid = refine_grid(u0.grid(), endpoints);
  auto base = std::make_shared<const PiecewiseFn>(u0);
  std::vector<PiecewiseFn::Segment> segs;
  const auto& bp = grid.breakpoints();
  for (std::size_t j = 0; j + 1 < bp.size(); ++j) {
    const double mid = 0.5 * (bp[j] + bp[j + 1]);
    int spike = -1;
    for (std::size_t i = 0; i < nv.spikes().size(); ++i) {
      const auto& iv = nv.interval(i);
      if (!iv.empty && mid >= iv.start && mid < iv.end) {
        spike = static_cast<int>(i);
        break;
      }
    }
    if (spike >= 0) {
      Vec v = nv.spikes().spikes()[static_cast<std::size_t>(spike)].value;
      segs.push_back([v](double) { return v; });
    } else {
      const std::size_t owner = u0.grid().locate(mid);
      segs.push_back([base, owner](double t) { return base->eval_segment(owner, t); });
    }
  }
  return PiecewiseFn(grid, std::move(segs), u0.dim(), Normalization::NormalizedRight);
}

PiecewiseC1Fn integrate_cauchy(const BolzaProblem& P, const PiecewiseFn& u, const Vec& pi,
                               const ode::Options& opts) {
  if (u.dim() != P.control_dim) throw std::domain_error(P.name + ": control dimension mismatch");
  auto uc = std::make_shared<const PiecewiseFn>(u);
  const auto f = P.f;
  const Vec params = pi;
  const ode::SegmentRhs rhs = [uc, f, params](std::size_t seg, double t, const Vec& y) {
    return f(t, y, uc->eval_segment(seg, t), params);
  };
  return ode::solve_segmented(rhs, P.initial_state, u.grid(), with_problem_guard(P, opts));
}

PiecewiseC1Fn picard_operator(const BolzaProblem& P, const PiecewiseC1Fn& x,
                              const PiecewiseFn& u, const Vec& pi, const ode::Options& opts) {
  const Grid grid = merge_grids(x.grid(), u.grid());
  auto xs = std::make_shared<const PiecewiseFn>(x.values());
  auto us = std::make_shared<const PiecewiseFn>(u);
  auto ox = std::make_shared<const std::vector<std::size_t>>(owner_map(grid, x.grid()));
  auto ou = std::make_shared<const std::vector<std::size_t>>(owner_map(grid, u.grid()));
  const auto f = P.f;
  const Vec params = pi;
  const ode::SegmentRhs rhs = [=](std::size_t seg, double t, const Vec&) {
    return f(t, xs->eval_segment((*ox)[seg], t), us->eval_segment((*ou)[seg], t), params);
  };
  return ode::solve_segmented(rhs, P.initial_state, grid, with_problem_guard(P, opts));
}

namespace {

// Fundamental solution Y of the matrix variational equation dY = f_x Y with
// Y(0) = I, vectorized column-major, on the merged grid of the process.
PiecewiseC1Fn fundamental_solution(const BolzaProblem& P, const Process& proc,
                                   const ode::Options& opts) {
  const Grid grid = merge_grids(proc.x.grid(), proc.u.grid());
  auto xs = std::make_shared<const PiecewiseFn>(proc.x.values());
  auto us = std::make_shared<const PiecewiseFn>(proc.u);
  auto ox = std::make_shared<const std::vector<std::size_t>>(owner_map(grid, proc.x.grid()));
  auto ou = std::make_shared<const std::vector<std::size_t>>(owner_map(grid, proc.u.grid()));
  const auto fx = P.f_x;
  const Vec params = proc.pi;
  const int n = P.state_dim;
  const ode::SegmentRhs rhs = [=](std::size_t seg, double t, const Vec& y) -> Vec {
    const Mat A = fx(t, xs->eval_segment((*ox)[seg], t), us->eval_segment((*ou)[seg], t), params);
    const Eigen::Map<const Mat> Y(y.data(), n, n);
    const Mat dY = A * Y;
    return Eigen::Map<const Vec>(dY.data(), n * n);
  };
  Vec y0(n * n);
  Eigen::Map<Mat>(y0.data(), n, n) = Mat::Identity(n, n);
  return ode::solve_segmented(rhs, y0, grid, with_problem_guard(P, opts));
}

Mat reshape_square(const Vec& v, int n) { return Eigen::Map<const Mat>(v.data(), n, n); }

}  // namespace

Resolvent::Resolvent(const BolzaProblem& P, const Process& proc, const ode::Options& opts)
: dim_(P.state_dim),
  horizon_(P.horizon),
  fundamental_(fundamental_solution(P, proc, opts)) {
  // Tabulate R(T, s) on a dense grid of sample times.
  const Mat YT = fundamental_at(horizon_);
  const auto& bp = fundamental_.grid().breakpoints();
  constexpr int kPerSegment = 16;
  for (std::size_t j = 0; j + 1 < bp.size(); ++j) {
    for (int k = 0; k < kPerSegment; ++k) {
      const double s = bp[j] + (bp[j + 1] - bp[j]) * k / static_cast<double>(kPerSegment);
      const Mat Ys = fundamental_at(s);
      terminal_cache_.emplace_back(s, YT * Ys.partialPivLu().inverse());
    }
  }
  terminal_cache_.emplace_back(horizon_, Mat::Identity(dim_, dim_));
}

Mat Resolvent::fundamental_at(double t) const {
  return reshape_square(fundamental_.eval(t), dim_);
}

Mat Resolvent::operator()(double t, double s) const {
  if (t == s) return Mat::Identity(dim_, dim_);
  const Mat Ys = fundamental_at(s);
  const Eigen::PartialPivLU<Mat> lu(Ys);
  const Mat inv = lu.inverse();
  const double cond = Ys.norm() * inv.norm();
  if (cond > 1e12) {
    condition_warnings_.fetch_add(1, std::memory_order_relaxed);
  }
  double seen = worst_condition_.load(std::memory_order_relaxed);
  while (cond > seen &&
         !worst_condition_.compare_exchange_weak(seen, cond, std::memory_order_relaxed)) {
  }
  return fundamental_at(t) * inv;
}

double Resolvent::worst_condition() const {
  return worst_condition_.load(std::memory_order_relaxed);
}

long Resolvent::condition_warnings() const {
  return condition_warnings_.load(std::memory_order_relaxed);
}

Resolvent resolvent_build(const BolzaProblem& P, const Process& proc, const ode::Options& opts) {
  return Resolvent(P, proc, opts);
}

namespace {

// Shared state of a linearized response: reference process, needle control,
// and owner maps on the working grid.
struct LinearizedData {
  Grid grid;
  PiecewiseFn x0;
  PiecewiseFn u0;
  PiecewiseFn ua;
  std::vector<std::size_t> ox, ou0, oua;
  std::function<Vec(double, const Vec&, const Vec&, const Vec&)> f;
  std::function<Mat(double, const Vec&, const Vec&, const Vec&)> f_x;
  Vec pi;
  std::vector<bool> active;  // segment intersects a needle interval

  Vec mismatch(std::size_t seg, double t) const {
    const Vec xv = x0.eval_segment(ox[seg], t);
    return f(t, xv, ua.eval_segment(oua[seg], t), pi) -
           f(t, xv, u0.eval_segment(ou0[seg], t), pi);
  }

  Mat jacobian(std::size_t seg, double t) const {
    return f_x(t, x0.eval_segment(ox[seg], t), u0.eval_segment(ou0[seg], t), pi);
  }
};

std::shared_ptr<const LinearizedData> make_linearized_data(const BolzaProblem& P,
                                                           const Process& proc,
                                                           const NeedleVariation& nv) {
  const PiecewiseFn ua = needle_control(proc.u, nv);
  Grid grid = merge_grids(merge_grids(proc.x.grid(), proc.u.grid()), ua.grid());
  LinearizedData d{grid,
                   proc.x.values(),
                   proc.u,
                   ua,
                   owner_map(grid, proc.x.grid()),
                   owner_map(grid, proc.u.grid()),
                   owner_map(grid, ua.grid()),
                   P.f,
                   P.f_x,
                   proc.pi,
                   {}};
  d.active.resize(grid.segment_count(), false);
  const auto& bp = grid.breakpoints();
  for (std::size_t j = 0; j + 1 < bp.size(); ++j) {
    const double mid = 0.5 * (bp[j] + bp[j + 1]);
    for (std::size_t i = 0; i < nv.spikes().size(); ++i) {
      const auto& iv = nv.interval(i);
      if (!iv.empty && mid >= iv.start && mid < iv.end) {
        d.active[j] = true;
        break;
      }
    }
  }
  return std::make_shared<const LinearizedData>(std::move(d));
}

}  // namespace

PiecewiseC1Fn linearized_inhomogeneous(const BolzaProblem& P, const Process& proc,
                                       const NeedleVariation& nv) {
  auto d = make_linearized_data(P, proc, nv);
  const int n = P.state_dim;
  auto Y = std::make_shared<const PiecewiseC1Fn>(fundamental_solution(P, proc, {}));
  const auto Y_at = [Y, n](double t) { return reshape_square(Y->eval(t), n); };

  // Cumulative integral W(tau_j) of Y(s)^{-1} D_a(s); only segments meeting a
  // needle interval contribute.
  const auto& bp = d->grid.breakpoints();
  const auto solve_at = [d, Y_at](std::size_t seg, double s) -> Vec {
    return Y_at(s).partialPivLu().solve(d->mismatch(seg, s));
  };
  std::vector<Vec> W(bp.size(), Vec::Zero(n));
  for (std::size_t j = 0; j + 1 < bp.size(); ++j) {
    W[j + 1] = W[j];
    if (d->active[j]) {
      W[j + 1] +=
          quad::integrate([&, j](double s) { return solve_at(j, s); }, bp[j], bp[j + 1]).value;
    }
  }

  auto Wp = std::make_shared<const std::vector<Vec>>(std::move(W));
  const auto w_at = [d, Y, Wp, n](std::size_t j, double a, double t) -> Vec {
    Vec w = (*Wp)[j];
    if (d->active[j] && t > a) {
      w += quad::integrate(
               [&](double s) -> Vec {
                 const Mat Ys = reshape_square(Y->eval(s), n);
                 return Ys.partialPivLu().solve(d->mismatch(j, s));
               },
               a, t)
               .value;
    }
    return w;
  };

  std::vector<PiecewiseFn::Segment> segs, dsegs;
  for (std::size_t j = 0; j + 1 < bp.size(); ++j) {
    const double a = bp[j];
    segs.push_back([Y_at, w_at, j, a](double t) -> Vec { return Y_at(t) * w_at(j, a, t); });
    dsegs.push_back([d, Y_at, w_at, j, a, n](double t) -> Vec {
      const Vec z = Y_at(t) * w_at(j, a, t);
      Vec out = d->jacobian(j, t) * z;
      if (d->active[j]) out += d->mismatch(j, t);
      return out;
    });
  }
  return PiecewiseC1Fn(d->grid, std::move(segs), std::move(dsegs), n);
}

PiecewiseC1Fn linearized_inhomogeneous_direct(const BolzaProblem& P, const Process& proc,
                                              const NeedleVariation& nv,
                                              const ode::Options& opts) {
  auto d = make_linearized_data(P, proc, nv);
  const int n = P.state_dim;
  const ode::SegmentRhs rhs = [d, n](std::size_t seg, double t, const Vec& z) -> Vec {
    Vec out = d->jacobian(seg, t) * z;
    if (d->active[seg]) out += d->mismatch(seg, t);
    return out;
  };
  return ode::solve_segmented(rhs, Vec::Zero(n), d->grid, with_problem_guard(P, opts));
}

Mat first_order_map(const BolzaProblem& P, const Process& proc, const SpikeList& S,
                    const Resolvent& R) {
  const int n = P.state_dim;
  Mat L(n, S.size());
  for (std::size_t i = 0; i < S.size(); ++i) {
    const double ti = S.spikes()[i].time;
    const Vec xv = proc.x.eval(ti);
    const Vec du = P.f(ti, xv, S.spikes()[i].value, proc.pi) -
                   P.f(ti, xv, proc.u.eval(ti), proc.pi);
    L.col(i) = R.from_terminal(ti) * du;
  }
  return L;
}

Mat first_order_map(const BolzaProblem& P, const Process& proc, const SpikeList& S) {
  return first_order_map(P, proc, S, Resolvent(P, proc));
}

std::vector<ResidualStudyRow> expansion_residual_study(const BolzaProblem& P, const Process& proc,
                                                       const SpikeList& S,
                                                       const std::vector<Vec>& amplitudes,
                                                       par::ExecPolicy policy) {
  const Resolvent R(P, proc);
  const Mat L = first_order_map(P, proc, S, R);
  const Vec x0T = proc.x.eval(P.horizon);
  std::vector<ResidualStudyRow> rows(amplitudes.size());
  par::for_each_index(amplitudes.size(), policy, [&](std::size_t r) {
    ResidualStudyRow row;
    const Vec& a = amplitudes[r];
    row.amplitude_l1 = a.lpNorm<1>();
    try {
      const NeedleVariation nv(S, a);
      const PiecewiseFn ua = needle_control(proc.u, nv);
      const PiecewiseC1Fn xa = integrate_cauchy(P, ua, proc.pi);
      if (row.amplitude_l1 > 0.0) {
        row.residual_norm = (xa.eval(P.horizon) - x0T - L * a).norm() / row.amplitude_l1;
        row.gronwall_ratio = sup_distance(xa.values(), proc.x.values()) / row.amplitude_l1;
      }
      row.ok = true;
      row.status = "ok";
    } catch (const std::exception& e) {
      row.ok = false;
      row.status = std::string("failed: ") + e.what();
    }
    rows[r] = std::move(row);
  });
  return rows;
}

std::string residual_study_csv(const std::vector<ResidualStudyRow>& rows) {
  std::ostringstream os;
  os << "norm_a1,residual_norm,gronwall_ratio,status\n";
  char buf[128];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,", row.amplitude_l1, row.residual_norm,
                  row.gronwall_ratio);
    os << buf << (row.ok ? "ok" : "failed") << "\n";
  }
  return os.str();
}

double discover_amplitude_guard(const BolzaProblem& P, const Process& proc, const SpikeList& S,
                                const Vec& amplitudes, int max_halvings) {
  double scale = 1.0;
  for (int k = 0; k < max_halvings; ++k) {
    try {
      const NeedleVariation nv(S, scale * amplitudes);
      const PiecewiseFn ua = needle_control(proc.u, nv);
      (void)integrate_cauchy(P, ua, proc.pi);
      return scale;
    } catch (const std::exception&) {
      scale *= 0.5;
    }
  }
  throw IntegrationError("discover_amplitude_guard: no feasible amplitude found", 0.0);
}

}  // namespace octool::flow
