#ifndef OCTOOL_BUILTINS_HPP_
#define OCTOOL_BUILTINS_HPP_

#include <string>
#include <vector>

#include "octool/envelope.hpp"
#include "octool/exprdiff.hpp"
#include "octool/problem.hpp"

namespace octool::builtins {

/// A registered problem: hand-coded analytic callbacks, the closed-form
/// solution family, and an equivalent expression declaration (used by tests
/// to cross-check the expression pipeline against the analytic one).
struct Builtin {
  BolzaProblem problem;
  envelope::SolutionFamily family;
  expr::ProblemExprs exprs;
};

/// Registry names: "steering", "lq_scalar", "constant_drift".
std::vector<std::string> names();
bool is_builtin(const std::string& name);
Builtin make(const std::string& name);

/// Scalar double integrator-style steering: dx = u, reward -u^2/2, terminal
/// equality x(T) = p1. Solution u == (p1 - x0)/T.
Builtin steering();

/// Scalar linear-quadratic problem with a parameterized running reward
/// -(x^2 + u^2)/2 - p1 x, dx = u, x(0) = 1, free terminal state.
Builtin lq_scalar();

/// Control-independent drift dx = p1 with terminal reward x(T).
Builtin constant_drift();

}  // namespace octool::builtins

#endif  // OCTOOL_BUILTINS_HPP_
