#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "octool/piecewise.hpp"
#include "octool/rng.hpp"
#include "oracles.hpp"

using namespace octool;

namespace {

Vec v1(double x) { return Vec::Constant(1, x); }

PiecewiseFn step_fn() {
  // 1 on [0, 1/2[, 2 on [1/2, 1]
  Grid g(1.0, {0.0, 0.5, 1.0});
  return PiecewiseFn(g, {[](double) { return Vec::Constant(1, 1.0); },
                         [](double) { return Vec::Constant(1, 2.0); }},
                     1);
}

PiecewiseC1Fn abs_kink() {
  // |t - 1/2| on [0, 1]
  Grid g(1.0, {0.0, 0.5, 1.0});
  return PiecewiseC1Fn(g,
                       {[](double t) { return v1(0.5 - t); }, [](double t) { return v1(t - 0.5); }},
                       {[](double) { return v1(-1.0); }, [](double) { return v1(1.0); }}, 1);
}

}  // namespace

TEST_CASE("eval: one-sided limits at a breakpoint") {
  const PiecewiseFn f = step_fn();
  CHECK(f.eval_scalar(0.5, Side::Left) == doctest::Approx(1.0));
  CHECK(f.eval_scalar(0.5, Side::Right) == doctest::Approx(2.0));
  CHECK(f.eval_scalar(0.5) == doctest::Approx(2.0));  // normalized-right
  CHECK(f.eval_scalar(1.0) == doctest::Approx(2.0));  // left value at T
  CHECK_THROWS_AS(f.eval(1.5), std::domain_error);
  CHECK_THROWS_AS(f.eval(0.0, Side::Left), std::domain_error);
}

TEST_CASE("eval: constants") {
  const PiecewiseFn c = PiecewiseFn::constant(2.0, 3.25);
  CHECK(c.eval_scalar(0.0) == 3.25);
  CHECK(c.eval_scalar(1.3) == 3.25);
  CHECK(c.eval_scalar(2.0) == 3.25);
}

TEST_CASE("extended derivative of |t - 1/2| takes the right slope at the kink") {
  const PiecewiseFn d = extended_derivative(abs_kink());
  CHECK(d.eval_scalar(0.5) == doctest::Approx(1.0));  // right derivative
  CHECK(d.eval_scalar(0.25) == doctest::Approx(-1.0));
  CHECK(d.eval_scalar(0.75) == doctest::Approx(1.0));
  CHECK(d.normalization() == Normalization::NormalizedRight);
}

TEST_CASE("extended derivative: smooth and constant cases") {
  const PiecewiseC1Fn sq = PiecewiseC1Fn::smooth(
      1.0, 1, [](double t) { return v1(t * t); }, [](double t) { return v1(2.0 * t); });
  const PiecewiseFn dsq = extended_derivative(sq);
  CHECK(dsq.eval_scalar(0.0) == doctest::Approx(0.0));
  CHECK(dsq.eval_scalar(0.3) == doctest::Approx(0.6));
  CHECK(dsq.eval_scalar(1.0) == doctest::Approx(2.0));

  const PiecewiseC1Fn c = PiecewiseC1Fn::smooth(
      1.0, 1, [](double) { return v1(4.0); }, [](double) { return v1(0.0); });
  CHECK(sup_norm(extended_derivative(c)) == 0.0);
}

TEST_CASE("extended derivative is linear (exactly)") {
  Rng rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    const auto xp = oracles::random_piecewise_poly(rng, 1.0);
    const auto yp = oracles::random_piecewise_poly(rng, 1.0);
    const PiecewiseC1Fn x = xp.as_c1(), y = yp.as_c1();
    const double a = rng.uniform(-2.0, 2.0), b = rng.uniform(-2.0, 2.0);
    const PiecewiseFn lhs = extended_derivative(linear_combination(a, x, b, y));
    const PiecewiseFn dx = extended_derivative(x);
    const PiecewiseFn dy = extended_derivative(y);
    double worst = 0.0;
    for (int k = 0; k <= 64; ++k) {
      const double t = k / 64.0;
      const Vec want = a * dx.eval(t) + b * dy.eval(t);
      worst = std::max(worst, (lhs.eval(t) - want).cwiseAbs().maxCoeff());
    }
    CHECK(worst == 0.0);
  }
}

TEST_CASE("integrate: constants and the kink identity") {
  const PiecewiseFn c = PiecewiseFn::constant(2.0, 3.0);
  CHECK(integrate(c, 0.25, 1.75)[0] == doctest::Approx(4.5).epsilon(1e-12));

  const PiecewiseC1Fn x = abs_kink();
  const Vec total = integrate(extended_derivative(x), 0.0, 1.0);
  CHECK(std::abs(total[0] - 0.0) <= 1e-12);  // x(1) - x(0) = 0

  CHECK_THROWS_AS(integrate(c, 1.0, 0.5), std::domain_error);
}

TEST_CASE("integrate: linear integrand against the antiderivative") {
  const PiecewiseFn f = PiecewiseFn::smooth(1.0, 1, [](double t) { return v1(2.0 * t); });
  CHECK(std::abs(integrate(f, 0.0, 1.0)[0] - 1.0) <= 1e-12);
}

TEST_CASE("fundamental theorem on random piecewise polynomials") {
  Rng rng(42);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto pp = oracles::random_piecewise_poly(rng, 1.0);
    const PiecewiseC1Fn x = pp.as_c1();
    const PiecewiseFn dx = extended_derivative(x);
    const double s = rng.uniform(0.0, 0.5), t = rng.uniform(0.5, 1.0);
    const double lhs = integrate(dx, s, t)[0];
    const double rhs = x.eval_scalar(t) - x.eval_scalar(s);
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("extended derivative of a PiecewiseC1Fn is normalized-right") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const auto pp = oracles::random_piecewise_poly(rng, 1.0);
    const PiecewiseFn dx = extended_derivative(pp.as_c1());
    CHECK(dx.normalization() == Normalization::NormalizedRight);
    // value at an interior breakpoint equals its right limit
    const auto& bp = dx.grid().breakpoints();
    for (std::size_t i = 1; i + 1 < bp.size(); ++i)
      CHECK((dx.eval(bp[i]) - dx.eval(bp[i], Side::Right)).norm() == 0.0);
    CHECK((dx.eval(1.0) - dx.eval(1.0, Side::Left)).norm() == 0.0);
  }
}

TEST_CASE("bielecki norm") {
  const PiecewiseFn one = PiecewiseFn::constant(1.0, 1.0);
  CHECK(bielecki_norm(one, 0.0) == doctest::Approx(1.0));
  CHECK(bielecki_norm(one, 1.0) == doctest::Approx(1.0));  // sup at t = 0

  const PiecewiseFn et = PiecewiseFn::smooth(1.0, 1, [](double t) { return v1(std::exp(t)); });
  CHECK(bielecki_norm(et, 1.0) == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(bielecki_norm(one, -1.0), std::domain_error);
}

TEST_CASE("bielecki/sup norm equivalence") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto pp = oracles::random_piecewise_poly(rng, 1.0);
    const PiecewiseFn f = extended_derivative(pp.as_c1());
    const double L = rng.uniform(0.0, 3.0);
    const double bn = bielecki_norm(f, L);
    const double sn = sup_norm(f);
    CHECK(bn <= sn + 1e-15);
    CHECK(bn >= std::exp(-L * 1.0) * sn - 1e-15);
  }
}

TEST_CASE("merge_grids") {
  const Grid a(1.0, {0.0, 1.0});
  const Grid b(1.0, {0.0, 0.5, 1.0});
  CHECK(merge_grids(a, b).breakpoints() == std::vector<double>{0.0, 0.5, 1.0});
  CHECK(merge_grids(b, b).breakpoints() == b.breakpoints());
  const Grid c(1.0, {0.0, 1.0 / 3.0, 1.0});
  const Grid d(1.0, {0.0, 2.0 / 3.0, 1.0});
  CHECK(merge_grids(c, d).breakpoints() ==
        std::vector<double>{0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0});
  const Grid e(2.0, {0.0, 2.0});
  CHECK_THROWS_AS(merge_grids(a, e), std::domain_error);
}

TEST_CASE("grid invariants") {
  CHECK_THROWS_AS(Grid(1.0, {0.0, 0.5, 0.5, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(Grid(1.0, {0.1, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(Grid(-1.0, {0.0, -1.0}), std::invalid_argument);
}

TEST_CASE("value jump rejected by PiecewiseC1Fn") {
  Grid g(1.0, {0.0, 0.5, 1.0});
  CHECK_THROWS_AS(
      PiecewiseC1Fn(g,
                    {[](double) { return v1(0.0); }, [](double) { return v1(1.0); }},
                    {[](double) { return v1(0.0); }, [](double) { return v1(0.0); }}, 1),
      std::invalid_argument);
}

TEST_CASE("json serialization round-trips through 17 significant digits") {
  const PiecewiseFn f = extended_derivative(abs_kink());
  const std::string js = to_json(f, 3);
  CHECK(js.find("\"T\": 1") != std::string::npos);
  CHECK(js.find("\"breakpoints\"") != std::string::npos);
  CHECK(js.find("\"samples\"") != std::string::npos);
  // one right and one left sample at the kink
  CHECK(js.find("\"right\"") != std::string::npos);
  CHECK(js.find("\"left\"") != std::string::npos);
}

TEST_CASE("re-gridding preserves values") {
  Rng rng(5);
  const auto pp = oracles::random_piecewise_poly(rng, 1.0);
  const PiecewiseC1Fn x = pp.as_c1();
  const Grid finer = refine_grid(x.grid(), {0.123, 0.456, 0.789});
  const PiecewiseC1Fn y = x.with_grid(finer);
  for (int k = 0; k <= 101; ++k) {
    const double t = k / 101.0;
    CHECK(y.eval_scalar(t) == doctest::Approx(x.eval_scalar(t)).epsilon(1e-14));
  }
}
