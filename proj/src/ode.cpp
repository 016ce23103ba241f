#include "octool/ode.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

namespace octool::ode {

namespace {

// Dormand-Prince 5(4) tableau (exact rationals).
constexpr double kC[7] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
constexpr double kA[7][6] = {
    {},
    {1.0 / 5},
    {3.0 / 40, 9.0 / 40},
    {44.0 / 45, -56.0 / 15, 32.0 / 9},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
    {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
};
constexpr double kB5[7] = {35.0 / 384,      0.0,           500.0 / 1113, 125.0 / 192,
                           -2187.0 / 6784, 11.0 / 84,     0.0};
constexpr double kB4[7] = {5179.0 / 57600, 0.0,           7571.0 / 16695, 393.0 / 640,
                           -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};

struct SegmentNodes {
  std::vector<double> t;
  std::vector<Vec> y;
  std::vector<Vec> f;
};

void check_guard(const Options& opts, double t, const Vec& y) {
  if (!y.allFinite() || y.norm() > opts.blowup_norm)
    throw IntegrationError("ode: state norm exceeded blow-up guard", t);
  if (opts.state_guard) {
    const auto& [lo, hi] = *opts.state_guard;
    for (int i = 0; i < y.size(); ++i) {
      if (y[i] < lo[i] || y[i] > hi[i])
        throw IntegrationError("ode: state left the guard box", t);
    }
  }
}

// One adaptive sweep over [a, b] (b < a means backward). Nodes are appended
// in traversal order.
SegmentNodes sweep(const SegmentRhs& rhs, std::size_t seg, const Vec& y_start, double a, double b,
                   double max_step, const Options& opts) {
  SegmentNodes nodes;
  const double dir = (b >= a) ? 1.0 : -1.0;
  const double span = std::abs(b - a);
  double t = a;
  Vec y = y_start;
  check_guard(opts, t, y);
  Vec f0 = rhs(seg, t, y);
  nodes.t.push_back(t);
  nodes.y.push_back(y);
  nodes.f.push_back(f0);

  double h = dir * std::min(max_step, span / 16.0);
  int steps = 0;
  Vec k[7];
  while (dir * (b - t) > 0.0) {
    if (++steps > opts.max_steps_per_segment)
      throw IntegrationError("ode: step budget exhausted", t);
    if (dir * (t + h - b) > 0.0) h = b - t;

    k[0] = f0;
    for (int s = 1; s < 7; ++s) {
      Vec ys = y;
      for (int j = 0; j < s; ++j) ys += h * kA[s][j] * k[j];
      k[s] = rhs(seg, t + kC[s] * h, ys);
    }
    Vec y5 = y, y4 = y;
    for (int s = 0; s < 7; ++s) {
      if (kB5[s] != 0.0) y5 += h * kB5[s] * k[s];
      if (kB4[s] != 0.0) y4 += h * kB4[s] * k[s];
    }

    double err = 0.0;
    for (int i = 0; i < y.size(); ++i) {
      const double sc = opts.abs_tol + opts.rel_tol * std::max(std::abs(y[i]), std::abs(y5[i]));
      const double e = (y5[i] - y4[i]) / sc;
      err += e * e;
    }
    err = std::sqrt(err / std::max<int>(1, y.size()));

    if (err <= 1.0) {
      t += h;
      y = y5;
      check_guard(opts, t, y);
      f0 = k[6];  // FSAL: stage 7 is the RHS at (t+h, y5)
      nodes.t.push_back(t);
      nodes.y.push_back(y);
      nodes.f.push_back(f0);
    }
    const double factor =
        std::clamp(0.9 * std::pow(std::max(err, 1e-16), -0.2), 0.2, 5.0);
    h *= factor;
    if (std::abs(h) > max_step) h = dir * max_step;
    if (std::abs(h) < 1e-14 * std::max(1.0, span))
      throw IntegrationError("ode: step size underflow", t);
  }
  return nodes;
}

// Cubic Hermite evaluation over stored (ascending) nodes.
Vec hermite_eval(const SegmentNodes& n, double t) {
  const auto& ts = n.t;
  std::size_t j = 0;
  if (t <= ts.front()) {
    j = 0;
  } else if (t >= ts.back()) {
    j = ts.size() - 2;
  } else {
    j = static_cast<std::size_t>(std::upper_bound(ts.begin(), ts.end(), t) - ts.begin()) - 1;
  }
  const double h = ts[j + 1] - ts[j];
  if (h == 0.0) return n.y[j];
  const double s = (t - ts[j]) / h;
  const double s2 = s * s, s3 = s2 * s;
  const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s;
  const double h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
  return h00 * n.y[j] + (h10 * h) * n.f[j] + h01 * n.y[j + 1] + (h11 * h) * n.f[j + 1];
}

PiecewiseC1Fn assemble(const SegmentRhs& rhs, const Grid& grid,
                       std::vector<SegmentNodes> per_segment) {
  std::vector<PiecewiseFn::Segment> segs, dsegs;
  const int dim = static_cast<int>(per_segment.front().y.front().size());
  for (std::size_t i = 0; i < per_segment.size(); ++i) {
    auto data = std::make_shared<const SegmentNodes>(std::move(per_segment[i]));
    segs.push_back([data](double t) { return hermite_eval(*data, t); });
    dsegs.push_back([data, rhs, i](double t) { return rhs(i, t, hermite_eval(*data, t)); });
  }
  return PiecewiseC1Fn(grid, std::move(segs), std::move(dsegs), dim);
}

}  // namespace

PiecewiseC1Fn solve_segmented(const SegmentRhs& f, const Vec& y0, const Grid& grid,
                              const Options& opts) {
  const auto& bp = grid.breakpoints();
  const double max_step = opts.max_step_fraction * grid.horizon();
  std::vector<SegmentNodes> per_segment;
  Vec y = y0;
  for (std::size_t i = 0; i + 1 < bp.size(); ++i) {
    SegmentNodes nodes = sweep(f, i, y, bp[i], bp[i + 1], max_step, opts);
    y = nodes.y.back();
    per_segment.push_back(std::move(nodes));
  }
  return assemble(f, grid, std::move(per_segment));
}

PiecewiseC1Fn solve_segmented_backward(const SegmentRhs& f, const Vec& yT, const Grid& grid,
                                       const Options& opts) {
  const auto& bp = grid.breakpoints();
  const double max_step = opts.max_step_fraction * grid.horizon();
  std::vector<SegmentNodes> per_segment(grid.segment_count());
  Vec y = yT;
  for (std::size_t i = grid.segment_count(); i-- > 0;) {
    SegmentNodes nodes = sweep(f, i, y, bp[i + 1], bp[i], max_step, opts);
    y = nodes.y.back();
    std::reverse(nodes.t.begin(), nodes.t.end());
    std::reverse(nodes.y.begin(), nodes.y.end());
    std::reverse(nodes.f.begin(), nodes.f.end());
    per_segment[i] = std::move(nodes);
  }
  return assemble(f, grid, std::move(per_segment));
}

PiecewiseC1Fn solve(const Rhs& f, const Vec& y0, const Grid& grid, const Options& opts) {
  return solve_segmented([f](std::size_t, double t, const Vec& y) { return f(t, y); }, y0, grid,
                         opts);
}

PiecewiseC1Fn solve_backward(const Rhs& f, const Vec& yT, const Grid& grid, const Options& opts) {
  return solve_segmented_backward([f](std::size_t, double t, const Vec& y) { return f(t, y); },
                                  yT, grid, opts);
}

}  // namespace octool::ode
