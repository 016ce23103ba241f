#include "octool/builtins.hpp"

#include <cmath>

namespace octool::builtins {

namespace {

RowVec row1(double v) { return RowVec::Constant(1, v); }
Vec vec1(double v) { return Vec::Constant(1, v); }

TerminalFn zero_terminal() {
  return TerminalFn{[](const Vec&, const Vec&) { return 0.0; },
                    [](const Vec&, const Vec&) { return RowVec::Zero(1); },
                    [](const Vec&, const Vec&) { return RowVec::Zero(1); }};
}

}  // namespace

Builtin steering() {
  BolzaProblem P;
  P.name = "steering";
  P.state_dim = P.control_dim = P.param_dim = 1;
  P.horizon = 1.0;
  P.initial_state = vec1(0.0);
  P.f0 = [](double, const Vec&, const Vec& u, const Vec&) { return -0.5 * u[0] * u[0]; };
  P.f = [](double, const Vec&, const Vec& u, const Vec&) { return u; };
  P.f0_x = [](double, const Vec&, const Vec&, const Vec&) { return RowVec::Zero(1); };
  P.f0_u = [](double, const Vec&, const Vec& u, const Vec&) { return row1(-u[0]); };
  P.f0_p = [](double, const Vec&, const Vec&, const Vec&) { return RowVec::Zero(1); };
  P.f_x = [](double, const Vec&, const Vec&, const Vec&) { return Mat::Zero(1, 1); };
  P.f_u = [](double, const Vec&, const Vec&, const Vec&) { return Mat::Identity(1, 1); };
  P.f_p = [](double, const Vec&, const Vec&, const Vec&) { return Mat::Zero(1, 1); };
  P.f0_t = [](double, const Vec&, const Vec&, const Vec&) { return 0.0; };
  P.f_t = [](double, const Vec&, const Vec&, const Vec&) { return Vec::Zero(1); };
  P.g.push_back(zero_terminal());
  P.h.push_back(TerminalFn{
      [](const Vec& xi, const Vec& pi) { return xi[0] - pi[0]; },
      [](const Vec&, const Vec&) { return row1(1.0); },
      [](const Vec&, const Vec&) { return row1(-1.0); }});
  P.control_from_adjoint = [](double, const Vec&, const Vec& p, const Vec&) { return p; };
  P.finalize();

  envelope::SolutionFamily fam;
  const double T = P.horizon;
  const double xi0 = P.initial_state[0];
  fam.provider = [T, xi0](const Vec& pi) -> Process {
    const double slope = (pi[0] - xi0) / T;
    PiecewiseC1Fn x = PiecewiseC1Fn::smooth(
        T, 1, [xi0, slope](double t) { return vec1(xi0 + slope * t); },
        [slope](double) { return vec1(slope); });
    PiecewiseFn u = PiecewiseFn::constant(T, slope);
    return Process{std::move(x), std::move(u), pi};
  };

  expr::ProblemExprs ex;
  ex.f0 = "-(u1^2)/2";
  ex.f = {"u1"};
  ex.h = {"x1 - p1"};
  return Builtin{std::move(P), std::move(fam), std::move(ex)};
}

Builtin lq_scalar() {
  BolzaProblem P;
  P.name = "lq_scalar";
  P.state_dim = P.control_dim = P.param_dim = 1;
  P.horizon = 1.0;
  P.initial_state = vec1(1.0);
  P.f0 = [](double, const Vec& x, const Vec& u, const Vec& pi) {
    return -0.5 * (x[0] * x[0] + u[0] * u[0]) - pi[0] * x[0];
  };
  P.f = [](double, const Vec&, const Vec& u, const Vec&) { return u; };
  P.f0_x = [](double, const Vec& x, const Vec&, const Vec& pi) { return row1(-x[0] - pi[0]); };
  P.f0_u = [](double, const Vec&, const Vec& u, const Vec&) { return row1(-u[0]); };
  P.f0_p = [](double, const Vec& x, const Vec&, const Vec&) { return row1(-x[0]); };
  P.f_x = [](double, const Vec&, const Vec&, const Vec&) { return Mat::Zero(1, 1); };
  P.f_u = [](double, const Vec&, const Vec&, const Vec&) { return Mat::Identity(1, 1); };
  P.f_p = [](double, const Vec&, const Vec&, const Vec&) { return Mat::Zero(1, 1); };
  P.f0_t = [](double, const Vec&, const Vec&, const Vec&) { return 0.0; };
  P.f_t = [](double, const Vec&, const Vec&, const Vec&) { return Vec::Zero(1); };
  P.g.push_back(zero_terminal());
  P.control_from_adjoint = [](double, const Vec&, const Vec& p, const Vec&) { return p; };
  P.finalize();

  // Stationary pair for parameter pi: x'' = x + pi with x(0) = 1 and
  // x'(1) = 0, i.e. x(t) = -pi + (1 + pi)(cosh t - tanh(1) sinh t), u = x'.
  envelope::SolutionFamily fam;
  const double T = P.horizon;
  fam.provider = [T](const Vec& pi) -> Process {
    const double c = 1.0 + pi[0];
    const double th = std::tanh(T);
    PiecewiseC1Fn x = PiecewiseC1Fn::smooth(
        T, 1,
        [c, th, pi](double t) { return vec1(-pi[0] + c * (std::cosh(t) - th * std::sinh(t))); },
        [c, th](double t) { return vec1(c * (std::sinh(t) - th * std::cosh(t))); });
    PiecewiseFn u = PiecewiseFn::smooth(
        T, 1, [c, th](double t) { return vec1(c * (std::sinh(t) - th * std::cosh(t))); });
    return Process{std::move(x), std::move(u), pi};
  };

  expr::ProblemExprs ex;
  ex.f0 = "-(x1^2+u1^2)/2 - p1*x1";
  ex.f = {"u1"};
  return Builtin{std::move(P), std::move(fam), std::move(ex)};
}

Builtin constant_drift() {
  BolzaProblem P;
  P.name = "constant_drift";
  P.state_dim = P.control_dim = P.param_dim = 1;
  P.horizon = 1.0;
  P.initial_state = vec1(0.0);
  P.f0 = [](double, const Vec&, const Vec&, const Vec&) { return 0.0; };
  P.f = [](double, const Vec&, const Vec&, const Vec& pi) { return pi; };
  P.f0_x = [](double, const Vec&, const Vec&, const Vec&) { return RowVec::Zero(1); };
  P.f0_u = [](double, const Vec&, const Vec&, const Vec&) { return RowVec::Zero(1); };
  P.f0_p = [](double, const Vec&, const Vec&, const Vec&) { return RowVec::Zero(1); };
  P.f_x = [](double, const Vec&, const Vec&, const Vec&) { return Mat::Zero(1, 1); };
  P.f_u = [](double, const Vec&, const Vec&, const Vec&) { return Mat::Zero(1, 1); };
  P.f_p = [](double, const Vec&, const Vec&, const Vec&) { return Mat::Identity(1, 1); };
  P.f0_t = [](double, const Vec&, const Vec&, const Vec&) { return 0.0; };
  P.f_t = [](double, const Vec&, const Vec&, const Vec&) { return Vec::Zero(1); };
  P.g.push_back(TerminalFn{[](const Vec& xi, const Vec&) { return xi[0]; },
                           [](const Vec&, const Vec&) { return row1(1.0); },
                           [](const Vec&, const Vec&) { return RowVec::Zero(1); }});
  P.finalize();

  envelope::SolutionFamily fam;
  const double T = P.horizon;
  const double xi0 = P.initial_state[0];
  fam.provider = [T, xi0](const Vec& pi) -> Process {
    const double drift = pi[0];
    PiecewiseC1Fn x = PiecewiseC1Fn::smooth(
        T, 1, [xi0, drift](double t) { return vec1(xi0 + drift * t); },
        [drift](double) { return vec1(drift); });
    PiecewiseFn u = PiecewiseFn::constant(T, 0.0);
    return Process{std::move(x), std::move(u), pi};
  };

  expr::ProblemExprs ex;
  ex.f0 = "0";
  ex.f = {"p1"};
  ex.g = {"x1"};
  return Builtin{std::move(P), std::move(fam), std::move(ex)};
}

std::vector<std::string> names() { return {"steering", "lq_scalar", "constant_drift"}; }

bool is_builtin(const std::string& name) {
  for (const auto& n : names())
    if (n == name) return true;
  return false;
}

Builtin make(const std::string& name) {
  if (name == "steering") return steering();
  if (name == "lq_scalar") return lq_scalar();
  if (name == "constant_drift") return constant_drift();
  throw std::invalid_argument("unknown builtin problem '" + name + "'");
}

}  // namespace octool::builtins
