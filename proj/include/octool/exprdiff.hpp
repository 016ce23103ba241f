#ifndef OCTOOL_EXPRDIFF_HPP_
#define OCTOOL_EXPRDIFF_HPP_

#include <memory>
#include <string>
#include <vector>

#include "octool/problem.hpp"
#include "octool/types.hpp"

namespace octool::expr {

struct Dims {
  int state = 0;
  int control = 0;
  int param = 0;
};

struct ParseError : std::runtime_error {
  ParseError(const std::string& what, std::size_t offset)
  : std::runtime_error(what), offset(offset) {}
  std::size_t offset;
};

struct EvalError : std::runtime_error {
  EvalError(const std::string& what, std::size_t offset, std::size_t length)
  : std::runtime_error(what), offset(offset), length(length) {}
  std::size_t offset;
  std::size_t length;
};

struct EvalPoint {
  double t = 0.0;
  Vec x;
  Vec u;
  Vec p;
};

/// Which variable groups receive identity tangent seeds.
struct SeedSet {
  bool time = false;
  bool state = false;
  bool control = false;
  bool param = false;
};

struct DualResult {
  double value = 0.0;
  double d_time = 0.0;
  RowVec d_state;
  RowVec d_control;
  RowVec d_param;
  /// abs() was evaluated exactly at 0; the right derivative (+1) was used.
  bool abs_kink = false;
};

struct Node;
using NodePtr = std::shared_ptr<const Node>;

/// Arithmetic expression over {t, x<i>, u<i>, p<i>}, operators + - * / ^,
/// unary minus, and sin cos exp log tanh sqrt abs. Immutable; evaluation is
/// re-entrant.
class Expr {
public:
  /// Recursive-descent parse with standard precedence (^ above unary minus
  /// above * / above + -); ^ associates to the right, the rest to the left.
  static Expr parse(const std::string& src, const Dims& dims);

  std::string print() const;

  double eval(const EvalPoint& pt) const;

  /// Value plus exact forward-mode partials with respect to the seeded
  /// variable groups.
  DualResult eval_dual(const EvalPoint& pt, const SeedSet& seeds) const;

  bool structurally_equal(const Expr& other) const;
  const Dims& dims() const noexcept { return dims_; }

  /// True when the expression references a control variable or t (terminal
  /// functions must not).
  bool uses_control_or_time() const;

private:
  Expr(NodePtr root, Dims dims) : root_(std::move(root)), dims_(dims) {}
  NodePtr root_;
  Dims dims_;
};

/// All expressions of a problem declaration.
struct ProblemExprs {
  std::string f0;
  std::vector<std::string> f;
  std::vector<std::string> g;  // g[0] terminal reward; may be empty => 0
  std::vector<std::string> h;
};

/// Builds a fully differentiable BolzaProblem from expression strings: every
/// derivative callback (state/control/parameter Jacobians, time partials,
/// terminal gradients) is synthesized by dual-number evaluation.
BolzaProblem bind_problem(const ProblemExprs& exprs, const Dims& dims, double horizon,
                          const Vec& initial_state, const ControlBox& box = {},
                          const std::string& name = "expr_problem");

}  // namespace octool::expr

#endif  // OCTOOL_EXPRDIFF_HPP_
