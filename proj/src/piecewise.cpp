#include "octool/piecewise.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace octool {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Grid::Grid(double horizon, std::vector<double> breakpoints)
: horizon_(horizon), breakpoints_(std::move(breakpoints)) {
  if (!(horizon_ > 0.0)) throw std::invalid_argument("Grid: horizon must be positive");
  if (breakpoints_.size() < 2) throw std::invalid_argument("Grid: need at least {0, T}");
  if (breakpoints_.front() != 0.0) throw std::invalid_argument("Grid: first breakpoint must be 0");
  if (breakpoints_.back() != horizon_)
    throw std::invalid_argument("Grid: last breakpoint must equal the horizon");
  for (std::size_t i = 0; i + 1 < breakpoints_.size(); ++i) {
    if (!(breakpoints_[i] < breakpoints_[i + 1]))
      throw std::invalid_argument("Grid: breakpoints must be strictly increasing");
  }
}

Grid Grid::trivial(double horizon) { return Grid(horizon, {0.0, horizon}); }

std::size_t Grid::locate(double t) const {
  if (t < 0.0 || t > horizon_) throw std::domain_error("Grid::locate: t outside [0, T]");
  if (t >= breakpoints_[breakpoints_.size() - 2]) return breakpoints_.size() - 2;
  auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t);
  return static_cast<std::size_t>(it - breakpoints_.begin()) - 1;
}

bool Grid::at_breakpoint(double t, std::size_t& idx) const {
  auto it = std::lower_bound(breakpoints_.begin(), breakpoints_.end(), t);
  if (it != breakpoints_.end() && *it == t) {
    idx = static_cast<std::size_t>(it - breakpoints_.begin());
    return true;
  }
  return false;
}

Grid merge_grids(const Grid& g1, const Grid& g2) {
  if (g1.horizon() != g2.horizon())
    throw std::domain_error("merge_grids: mismatched horizons");
  std::vector<double> pts = g1.breakpoints();
  pts.insert(pts.end(), g2.breakpoints().begin(), g2.breakpoints().end());
  std::sort(pts.begin(), pts.end());
  const double tol = Grid::dedup_tolerance(g1.horizon());
  std::vector<double> out;
  for (double p : pts) {
    if (out.empty() || p - out.back() > tol) out.push_back(p);
  }
  out.front() = 0.0;
  out.back() = g1.horizon();
  return Grid(g1.horizon(), std::move(out));
}

Grid refine_grid(const Grid& g, const std::vector<double>& extra_points) {
  std::vector<double> pts = g.breakpoints();
  for (double p : extra_points) {
    if (p > 0.0 && p < g.horizon()) pts.push_back(p);
  }
  std::sort(pts.begin(), pts.end());
  const double tol = Grid::dedup_tolerance(g.horizon());
  std::vector<double> out;
  for (double p : pts) {
    if (out.empty() || p - out.back() > tol) out.push_back(p);
  }
  out.back() = g.horizon();
  return Grid(g.horizon(), std::move(out));
}

PiecewiseFn::PiecewiseFn(Grid grid, std::vector<Segment> segments, int dim,
                         Normalization normalization)
: grid_(std::move(grid)),
  segments_(std::move(segments)),
  dim_(dim),
  normalization_(normalization) {
  if (segments_.size() != grid_.segment_count())
    throw std::invalid_argument("PiecewiseFn: one segment per grid interval required");
  if (dim_ < 1) throw std::invalid_argument("PiecewiseFn: dim must be >= 1");
  const auto& bp = grid_.breakpoints();
  right_limits_.resize(bp.size());
  left_limits_.resize(bp.size());
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    right_limits_[i] = segments_[i](bp[i]);
    left_limits_[i + 1] = segments_[i](bp[i + 1]);
    if (right_limits_[i].size() != dim_ || left_limits_[i + 1].size() != dim_)
      throw std::invalid_argument("PiecewiseFn: segment value dimension mismatch");
  }
}

PiecewiseFn PiecewiseFn::constant(double horizon, const Vec& value) {
  Vec v = value;
  return PiecewiseFn(Grid::trivial(horizon), {[v](double) { return v; }},
                     static_cast<int>(value.size()));
}

PiecewiseFn PiecewiseFn::constant(double horizon, double value) {
  return constant(horizon, Vec::Constant(1, value));
}

PiecewiseFn PiecewiseFn::smooth(double horizon, int dim, Segment fn) {
  return PiecewiseFn(Grid::trivial(horizon), {std::move(fn)}, dim);
}

Vec PiecewiseFn::eval(double t, Side side) const {
  const double T = grid_.horizon();
  if (t < 0.0 || t > T) throw std::domain_error("PiecewiseFn::eval: t outside [0, T]");
  std::size_t bidx = 0;
  const bool on_bp = grid_.at_breakpoint(t, bidx);
  if (on_bp) {
    const std::size_t last = grid_.breakpoints().size() - 1;
    switch (side) {
      case Side::Left:
        if (bidx == 0) throw std::domain_error("PiecewiseFn::eval: no left limit at 0");
        return left_limits_[bidx];
      case Side::Right:
        if (bidx == last) throw std::domain_error("PiecewiseFn::eval: no right limit at T");
        return right_limits_[bidx];
      case Side::Auto:
        // Normalized-right convention: right value except at T. The Raw flag
        // evaluates the owning segment, which stores the same one-sided value.
        return bidx == last ? left_limits_[bidx] : right_limits_[bidx];
    }
  }
  return segments_[grid_.locate(t)](t);
}

PiecewiseFn PiecewiseFn::with_grid(const Grid& finer) const {
  std::vector<Segment> segs;
  segs.reserve(finer.segment_count());
  const auto& bp = finer.breakpoints();
  for (std::size_t j = 0; j + 1 < bp.size(); ++j) {
    const double mid = 0.5 * (bp[j] + bp[j + 1]);
    const std::size_t owner = grid_.locate(mid);
    Segment owner_fn = segments_[owner];
    segs.push_back(std::move(owner_fn));
  }
  return PiecewiseFn(finer, std::move(segs), dim_, normalization_);
}

PiecewiseC1Fn::PiecewiseC1Fn(Grid grid, std::vector<Segment> segments,
                             std::vector<Segment> derivatives, int dim)
: values_(std::move(grid), std::move(segments), dim), derivatives_(std::move(derivatives)) {
  if (derivatives_.size() != values_.grid().segment_count())
    throw std::invalid_argument("PiecewiseC1Fn: one derivative per segment required");
  // Continuity across interior breakpoints; only the derivative may jump.
  double scale = 1.0;
  const auto& bp = values_.grid().breakpoints();
  for (std::size_t i = 1; i + 1 < bp.size(); ++i)
    scale = std::max(scale, values_.right_limit(i).norm());
  for (std::size_t i = 1; i + 1 < bp.size(); ++i) {
    const double jump = (values_.right_limit(i) - values_.left_limit(i)).norm();
    if (jump > 1e-8 * scale)
      throw std::invalid_argument("PiecewiseC1Fn: value jump at breakpoint " + std::to_string(i));
  }
}

PiecewiseC1Fn PiecewiseC1Fn::smooth(double horizon, int dim, Segment fn, Segment dfn) {
  return PiecewiseC1Fn(Grid::trivial(horizon), {std::move(fn)}, {std::move(dfn)}, dim);
}

PiecewiseC1Fn PiecewiseC1Fn::with_grid(const Grid& finer) const {
  std::vector<Segment> segs, dsegs;
  const PiecewiseFn self = values_;
  const auto& bp = finer.breakpoints();
  for (std::size_t j = 0; j + 1 < bp.size(); ++j) {
    const double mid = 0.5 * (bp[j] + bp[j + 1]);
    const std::size_t owner = grid().locate(mid);
    Segment seg = [self, owner](double t) { return self.eval_segment(owner, t); };
    Segment dseg = derivatives_[owner];
    segs.push_back(std::move(seg));
    dsegs.push_back(std::move(dseg));
  }
  return PiecewiseC1Fn(finer, std::move(segs), std::move(dsegs), dim());
}

PiecewiseFn extended_derivative(const PiecewiseC1Fn& x) {
  return PiecewiseFn(x.grid(), x.derivatives_, x.dim(), Normalization::NormalizedRight);
}

Vec integrate(const PiecewiseFn& f, double s, double t, const quad::Options& opts) {
  const double T = f.grid().horizon();
  if (s > t) throw std::domain_error("integrate: s > t");
  if (s < 0.0 || t > T) throw std::domain_error("integrate: range outside [0, T]");
  Vec total = Vec::Zero(f.dim());
  const auto& bp = f.grid().breakpoints();
  for (std::size_t i = 0; i + 1 < bp.size(); ++i) {
    const double a = std::max(s, bp[i]);
    const double b = std::min(t, bp[i + 1]);
    if (b <= a) continue;
    const auto seg = [&f, i](double r) { return f.eval_segment(i, r); };
    total += quad::integrate(seg, a, b, opts).value;
  }
  return total;
}

double bielecki_norm(const PiecewiseFn& f, double weight_rate) {
  if (weight_rate < 0.0) throw std::domain_error("bielecki_norm: weight rate must be >= 0");
  const auto& bp = f.grid().breakpoints();
  double best = 0.0;
  const auto consider = [&](double t, const Vec& v) {
    best = std::max(best, std::exp(-weight_rate * t) * v.norm());
  };
  for (std::size_t i = 0; i + 1 < bp.size(); ++i) {
    consider(bp[i], f.right_limit(i));
    consider(bp[i + 1], f.left_limit(i + 1));
    constexpr int kSamples = 64;
    for (int k = 1; k <= kSamples; ++k) {
      const double t = bp[i] + (bp[i + 1] - bp[i]) * k / (kSamples + 1.0);
      consider(t, f.eval_segment(i, t));
    }
  }
  return best;
}

PiecewiseFn linear_combination(double alpha, const PiecewiseFn& x, double beta,
                               const PiecewiseFn& y) {
  if (x.dim() != y.dim()) throw std::invalid_argument("linear_combination: dim mismatch");
  const Grid merged = merge_grids(x.grid(), y.grid());
  auto xp = std::make_shared<const PiecewiseFn>(x);
  auto yp = std::make_shared<const PiecewiseFn>(y);
  std::vector<PiecewiseFn::Segment> segs;
  const auto& bp = merged.breakpoints();
  for (std::size_t j = 0; j + 1 < bp.size(); ++j) {
    const double mid = 0.5 * (bp[j] + bp[j + 1]);
    const std::size_t ix = x.grid().locate(mid);
    const std::size_t iy = y.grid().locate(mid);
    segs.push_back([alpha, beta, xp, yp, ix, iy](double t) -> Vec {
      return alpha * xp->eval_segment(ix, t) + beta * yp->eval_segment(iy, t);
    });
  }
  Normalization norm = (x.normalization() == Normalization::NormalizedRight &&
                        y.normalization() == Normalization::NormalizedRight)
                           ? Normalization::NormalizedRight
                           : Normalization::Raw;
  return PiecewiseFn(merged, std::move(segs), x.dim(), norm);
}

PiecewiseC1Fn linear_combination(double alpha, const PiecewiseC1Fn& x, double beta,
                                 const PiecewiseC1Fn& y) {
  if (x.dim() != y.dim()) throw std::invalid_argument("linear_combination: dim mismatch");
  const Grid merged = merge_grids(x.grid(), y.grid());
  auto xp = std::make_shared<const PiecewiseFn>(x.values());
  auto yp = std::make_shared<const PiecewiseFn>(y.values());
  auto dxp = std::make_shared<const PiecewiseFn>(extended_derivative(x));
  auto dyp = std::make_shared<const PiecewiseFn>(extended_derivative(y));
  std::vector<PiecewiseFn::Segment> segs, dsegs;
  const auto& bp = merged.breakpoints();
  for (std::size_t j = 0; j + 1 < bp.size(); ++j) {
    const double mid = 0.5 * (bp[j] + bp[j + 1]);
    const std::size_t ix = x.grid().locate(mid);
    const std::size_t iy = y.grid().locate(mid);
    segs.push_back([alpha, beta, xp, yp, ix, iy](double t) -> Vec {
      return alpha * xp->eval_segment(ix, t) + beta * yp->eval_segment(iy, t);
    });
    dsegs.push_back([alpha, beta, dxp, dyp, ix, iy](double t) -> Vec {
      return alpha * dxp->eval_segment(ix, t) + beta * dyp->eval_segment(iy, t);
    });
  }
  return PiecewiseC1Fn(merged, std::move(segs), std::move(dsegs), x.dim());
}

double sup_distance(const PiecewiseFn& f, const PiecewiseFn& g) {
  const PiecewiseFn diff = linear_combination(1.0, f, -1.0, g);
  return sup_norm(diff);
}

std::string to_json(const PiecewiseFn& f, int samples_per_segment) {
  std::ostringstream os;
  os << "{\"T\": " << fmt17(f.grid().horizon()) << ", \"breakpoints\": [";
  const auto& bp = f.grid().breakpoints();
  for (std::size_t i = 0; i < bp.size(); ++i) {
    if (i) os << ", ";
    os << fmt17(bp[i]);
  }
  os << "], \"samples\": [";
  bool first = true;
  const auto emit = [&](double t, const char* side, const Vec& v) {
    if (!first) os << ", ";
    first = false;
    os << "[" << fmt17(t) << ", \"" << side << "\"";
    for (int c = 0; c < v.size(); ++c) os << ", " << fmt17(v[c]);
    os << "]";
  };
  for (std::size_t i = 0; i + 1 < bp.size(); ++i) {
    emit(bp[i], "right", f.right_limit(i));
    for (int k = 1; k <= samples_per_segment; ++k) {
      const double t = bp[i] + (bp[i + 1] - bp[i]) * k / (samples_per_segment + 1.0);
      emit(t, "interior", f.eval_segment(i, t));
    }
    emit(bp[i + 1], "left", f.left_limit(i + 1));
  }
  os << "]}";
  return os.str();
}

}  // namespace octool
