#ifndef OCTOOL_QUADRATURE_HPP_
#define OCTOOL_QUADRATURE_HPP_

#include <functional>

#include "octool/types.hpp"

namespace octool::quad {

struct Options {
  double abs_tol = 1e-10;
  int max_depth = 40;
};

struct Result {
  Vec value;
  double error_estimate = 0.0;
  int evaluations = 0;
  bool converged = true;
};

/// Adaptive quadrature of a smooth vector-valued integrand on [a, b] using an
/// embedded Gauss 7 / Gauss 15 pair; intervals are bisected until the local
/// error estimate meets the tolerance. All nodes are strictly interior, so
/// the integrand is never evaluated at a or b.
Result integrate(const std::function<Vec(double)>& f, double a, double b,
                 const Options& opts = {});

/// Scalar convenience wrapper.
double integrate_scalar(const std::function<double(double)>& f, double a, double b,
                        const Options& opts = {});

}  // namespace octool::quad

#endif  // OCTOOL_QUADRATURE_HPP_
