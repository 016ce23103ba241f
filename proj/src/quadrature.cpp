#include "octool/quadrature.hpp"

#include <array>
#include <cmath>

namespace octool::quad {

namespace {

// Gauss-Legendre nodes/weights on [-1, 1], computed once by Newton iteration
// on P_n. Converges to machine precision in a handful of steps.
template <int N>
struct GaussRule {
  std::array<double, N> node{};
  std::array<double, N> weight{};

  GaussRule() {
    for (int i = 0; i < N; ++i) {
      double x = std::cos(M_PI * (i + 0.75) / (N + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        // Recurrence for P_N(x) and P_N'(x).
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= N; ++k) {
          const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = N * (x * p1 - p0) / (x * x - 1.0);
        const double dx = p1 / dp;
        x -= dx;
        if (std::abs(dx) < 1e-16) break;
      }
      // Recompute derivative at the converged node for the weight.
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= N; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = N * (x * p1 - p0) / (x * x - 1.0);
      node[i] = x;
      weight[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
  }
};

const GaussRule<7>& rule7() {
  static const GaussRule<7> r;
  return r;
}
const GaussRule<15>& rule15() {
  static const GaussRule<15> r;
  return r;
}

struct Panel {
  Vec low;   // Gauss 7
  Vec high;  // Gauss 15
  int evals = 0;
};

Panel evaluate_panel(const std::function<Vec(double)>& f, double a, double b) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  Panel p;
  const auto& r7 = rule7();
  const auto& r15 = rule15();
  for (int i = 0; i < 7; ++i) {
    const Vec v = f(c + h * r7.node[i]);
    if (i == 0)
      p.low = r7.weight[i] * v;
    else
      p.low += r7.weight[i] * v;
  }
  for (int i = 0; i < 15; ++i) {
    const Vec v = f(c + h * r15.node[i]);
    if (i == 0)
      p.high = r15.weight[i] * v;
    else
      p.high += r15.weight[i] * v;
  }
  p.low *= h;
  p.high *= h;
  p.evals = 22;
  return p;
}

void recurse(const std::function<Vec(double)>& f, double a, double b, double tol,
             int depth, const Options& opts, Result& out) {
  Panel p = evaluate_panel(f, a, b);
  out.evaluations += p.evals;
  const double err = (p.high - p.low).norm();
  if (err <= tol || depth >= opts.max_depth) {
    if (out.value.size() == 0)
      out.value = p.high;
    else
      out.value += p.high;
    out.error_estimate += err;
    if (err > tol) out.converged = false;
    return;
  }
  const double m = 0.5 * (a + b);
  recurse(f, a, m, 0.5 * tol, depth + 1, opts, out);
  recurse(f, m, b, 0.5 * tol, depth + 1, opts, out);
}

}  // namespace

Result integrate(const std::function<Vec(double)>& f, double a, double b, const Options& opts) {
  Result out;
  if (a == b) {
    out.value = Vec::Zero(f(a).size());
    return out;
  }
  recurse(f, a, b, opts.abs_tol, 0, opts, out);
  return out;
}

double integrate_scalar(const std::function<double(double)>& f, double a, double b,
                        const Options& opts) {
  const Result r = integrate([&](double t) { return Vec::Constant(1, f(t)); }, a, b, opts);
  return r.value[0];
}

}  // namespace octool::quad
