#include "doctest.h"

#include "flowlab/scenarios.hpp"
#include "flowlab/semigroup.hpp"

#include <cmath>

using namespace flowlab;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<int>(v.size()));
  int i = 0;
  for (double e : v) out[i++] = e;
  return out;
}

McConfig config(long paths, std::uint64_t seed = 1) {
  McConfig c;
  c.paths = paths;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("observable differentials") {
  const Vector x = vec({0.3, -1.2}), v = vec({2.0, 0.5});
  CHECK(observable_identity(1).differential(x, v) == 0.5);
  CHECK(observable_square().differential(x, v) == doctest::Approx(2 * x.dot(v)));
  CHECK(observable_sin(0).differential(x, v) == doctest::Approx(std::cos(0.3) * 2.0));
  CHECK(observable_constant(4.0).differential(x, v) == 0.0);
  ScalarObservable fd;
  fd.f = [](const Vector& y) { return y[0] * y[0] * y[1]; };
  CHECK(fd.differential(x, v) == doctest::Approx(2 * 0.3 * -1.2 * 2.0 + 0.09 * 0.5).epsilon(1e-7));
  CHECK(fd.differential(x, 3.0 * v) == doctest::Approx(3.0 * fd.differential(x, v)).epsilon(1e-14));
}

TEST_CASE("P_t of |x|^2 under translation") {
  const Scenario s = builtin("translation(2)");
  const MomentEstimate e = estimate_Ptf(s.system, observable_square(), vec({1.0, 2.0}), 0.5, config(4000, 3));
  CHECK(std::abs(e.value - 6.0) <= 4.0 * e.std_error);
}

TEST_CASE("P_t of x under OU") {
  const Scenario s = builtin("ou(1)");
  const double h = 1e-3;
  const double factor = std::pow(1.0 - h + 0.5 * h * h, 1000);
  const MomentEstimate e = estimate_Ptf(s.system, observable_identity(), vec({2.0}), 1.0, config(4000, 4));
  CHECK(std::abs(e.value - 2.0 * factor) <= 4.0 * e.std_error);
}

TEST_CASE("P_t of a constant is the constant") {
  const Scenario s = builtin("sphere(3)");
  const MomentEstimate e = estimate_Ptf(s.system, observable_constant(2.5), vec({0.0, 0.0, 1.0}), 0.2, config(50));
  CHECK(e.value == 2.5);
  CHECK(e.std_error == 0.0);
}

TEST_CASE("derivative semigroup is linear in v") {
  const Scenario s = builtin("linear(-1)");
  const ScalarObservable obs = observable_sin();
  const OneForm df = [&](const Vector& x, const Vector& v) { return obs.differential(x, v); };
  const McConfig c = config(200, 5);
  const MomentEstimate a = estimate_deltaPt(s.system, df, vec({0.7}), vec({1.0}), 0.5, c);
  const MomentEstimate b = estimate_deltaPt(s.system, df, vec({0.7}), vec({-2.0}), 0.5, c);
  CHECK(b.value == -2.0 * a.value);
}

TEST_CASE("derivative semigroup of x under OU is e^-t to Heun accuracy") {
  const Scenario s = builtin("ou(1)");
  const ScalarObservable obs = observable_identity();
  const OneForm df = [&](const Vector& x, const Vector& v) { return obs.differential(x, v); };
  const MomentEstimate e = estimate_deltaPt(s.system, df, vec({0.0}), vec({1.0}), 1.0, config(100));
  CHECK(e.value == doctest::Approx(std::exp(-1.0)).epsilon(1e-6));
  CHECK(e.std_error < 1e-15);
}

TEST_CASE("finite differences of P_t f converge to delta P_t(df)") {
  const Scenario s = builtin("linear(-1)");
  const ConsistencyReport r = gradient_consistency_check(s.system, observable_sin(), vec({0.8}), vec({1.0}), 0.5,
                                                         config(2000, 6), {1e-1, 1e-2, 1e-3});
  REQUIRE(r.rungs.size() == 3);
  CHECK(r.rungs[1].pass);
  CHECK(r.rungs[2].pass);
  CHECK(std::abs(r.rungs[2].discrepancy) < std::abs(r.rungs[0].discrepancy));
  REQUIRE(r.richardson_slope.has_value());
  CHECK(*r.richardson_slope == doctest::Approx(1.0).epsilon(0.2));
  CHECK(r.probe_nodes.size() == 5);
  CHECK(r.probe.size() == 5);
}

TEST_CASE("consistency check rejects a zero direction") {
  const Scenario s = builtin("ou(1)");
  CHECK_THROWS_AS(gradient_consistency_check(s.system, observable_identity(), vec({0.0}), vec({0.0}), 0.5, config(10)),
                  ContractError);
}

TEST_CASE("semigroup property under translation") {
  // P_t P_s |x|^2 = |x|^2 + n (t + s)
  const Scenario s = builtin("translation(2)");
  const MomentEstimate e = estimate_nested(s.system, observable_square(), vec({1.0, 0.0}), 0.3, 0.2, config(400, 9), 50);
  CHECK(std::abs(e.value - 2.0) <= 4.0 * e.std_error);
}
