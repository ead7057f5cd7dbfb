#include "doctest.h"

#include "flowlab/flow.hpp"
#include "flowlab/scenarios.hpp"

#include <cmath>
#include <sstream>

using namespace flowlab;

namespace {

std::shared_ptr<const ManifoldModel> flat(int n) {
  return std::make_shared<const ManifoldModel>(ManifoldModel::flat(n));
}

VectorFieldSystem expression_system(int dim, int noise, std::vector<std::vector<std::string>> x,
                                    std::vector<std::string> a) {
  ExpressionSystemSpec spec;
  spec.dim = dim;
  spec.noise_dim = noise;
  spec.diffusion = std::move(x);
  spec.drift = std::move(a);
  return system_from_expressions(spec, flat(dim));
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<int>(v.size()));
  int i = 0;
  for (double e : v) out[i++] = e;
  return out;
}

}  // namespace

TEST_CASE("philox4x32-10 known-answer vectors") {
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == PhiloxCounter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}) ==
        PhiloxCounter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}) ==
        PhiloxCounter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("normal source moments") {
  const NormalSource src(123, 4);
  double sum = 0, sq = 0, cube = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = src.normal(static_cast<std::uint64_t>(i / 4), static_cast<std::uint32_t>(i % 4));
    sum += z;
    sq += z * z;
    cube += z * z * z;
  }
  CHECK(std::abs(sum / n) < 4.0 / std::sqrt(n));
  CHECK(std::abs(sq / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(cube / n) < 4.0 * std::sqrt(15.0 / n));
}

TEST_CASE("normal source is a pure function of its counter") {
  const NormalSource a(9, 1), b(9, 1), c(9, 2), d(10, 1);
  CHECK(a.normal(17, 3) == b.normal(17, 3));
  CHECK(a.normal(17, 3) != c.normal(17, 3));
  CHECK(a.normal(17, 3) != d.normal(17, 3));
  CHECK(a.normal(17, 3) != a.normal(17, 3, true));
  double buf[5];
  a.normals(17, buf, 5);
  CHECK(buf[3] == a.normal(17, 3));
}

TEST_CASE("coarse increments are sums of fine increments") {
  const BrownianDriver drv(5, 0, 3, 1e-3);
  Vector coarse(3), fine(3), sum = Vector::Zero(3);
  drv.increment(2, 4, coarse);
  for (int j = 0; j < 4; ++j) {
    drv.fine_increment(8 + j, fine);
    sum += fine;
  }
  CHECK((coarse - sum).norm() < 1e-15);
  Vector z(3);
  BrownianDriver::zero(3, 1e-3).increment(0, 10, z);
  CHECK(z.norm() == 0.0);
}

TEST_CASE("time grid must divide the horizon") {
  CHECK(TimeGrid::uniform(1.0, 1e-3).steps == 1000);
  CHECK(TimeGrid::uniform(0.5, 2.5e-4).steps == 2000);
  CHECK_THROWS_AS(TimeGrid::uniform(1.0, 0.3), ContractError);
  const BrownianDriver drv(0, 0, 1, 1e-3);
  CHECK(aggregation_factor(TimeGrid::uniform(1.0, 4e-3), drv) == 4);
  CHECK_THROWS_AS(aggregation_factor(TimeGrid::uniform(1.0, 5e-4), drv), ContractError);
}

TEST_CASE("translation flow equals x0 plus the Brownian path") {
  const Scenario s = builtin("translation(2)");
  const BrownianDriver drv(42, 3, 2, 1e-3);
  const TimeGrid grid = TimeGrid::uniform(1.0, 1e-3);
  const Vector x0 = vec({0.5, -1.0});
  const Trajectory tr = integrate_flow(s.system, x0, grid, drv);
  Vector x = x0, db(2);
  for (long k = 0; k < grid.steps; ++k) {
    drv.fine_increment(static_cast<std::uint64_t>(k), db);
    x += db;
  }
  CHECK((tr.states.back() - x).norm() < 1e-12);
  CHECK(tr.states.size() == static_cast<std::size_t>(grid.steps + 1));
}

TEST_CASE("translation derivative flow is the identity") {
  const Scenario s = builtin("translation(3)");
  const BrownianDriver drv(1, 0, 3, 1e-3);
  for (auto mode : {DerivativeMode::Direct, DerivativeMode::LogRadial}) {
    const Vector v0 = vec({1.0, -2.0, 0.5});
    const Trajectory tr = integrate_derivative_flow(s.system, Vector::Zero(3), v0, TimeGrid::uniform(1.0, 1e-3), drv, mode);
    CHECK((tr.tangents.back() - v0).norm() <= 1e-12);
  }
}

TEST_CASE("OU with zero noise follows the Heun map") {
  const Scenario s = builtin("ou(1)");
  const double h = 1e-3;
  const TimeGrid grid = TimeGrid::uniform(1.0, h);
  const Trajectory tr =
      integrate_derivative_flow(s.system, vec({2.0}), vec({1.0}), grid, BrownianDriver::zero(1, h), DerivativeMode::Direct);
  const double factor = std::pow(1.0 - h + 0.5 * h * h, 1000);
  CHECK(tr.states.back()[0] == doctest::Approx(2.0 * factor).epsilon(1e-12));
  CHECK(tr.tangents.back()[0] == doctest::Approx(factor).epsilon(1e-12));
  CHECK(std::abs(factor - std::exp(-1.0)) < 1e-6);
}

TEST_CASE("OU derivative flow at dt = 1e-4") {
  const Scenario s = builtin("ou(1)");
  const BrownianDriver drv(3, 0, 1, 1e-4);
  const Trajectory tr = integrate_derivative_flow(s.system, vec({0.3}), vec({2.0}), TimeGrid::uniform(1.0, 1e-4), drv,
                                                  DerivativeMode::LogRadial);
  CHECK(std::abs(tr.tangents.back().norm() - 2.0 * std::exp(-1.0)) <= 1e-3);
}

TEST_CASE("direct mode is linear in v bit for bit") {
  const Scenario s = builtin("kunita");
  const BrownianDriver drv(8, 0, 2, 1e-3);
  const TimeGrid grid = TimeGrid::uniform(0.25, 1e-3);
  const Vector x0 = vec({0.4, 0.3});
  const Trajectory a = integrate_derivative_flow(s.system, x0, vec({1.0, 0.5}), grid, drv, DerivativeMode::Direct);
  const Trajectory b = integrate_derivative_flow(s.system, x0, vec({2.0, 1.0}), grid, drv, DerivativeMode::Direct);
  REQUIRE(!a.exploded);
  CHECK((b.tangents.back() - 2.0 * a.tangents.back()).norm() == 0.0);
}

TEST_CASE("log-radial and direct modes agree") {
  const Scenario s = builtin("linear(-1)");
  const BrownianDriver drv(4, 0, 1, 1e-3);
  const TimeGrid grid = TimeGrid::uniform(2.0, 1e-3);
  const Trajectory a = integrate_derivative_flow(s.system, vec({1.0}), vec({1.0}), grid, drv, DerivativeMode::Direct);
  const Trajectory b = integrate_derivative_flow(s.system, vec({1.0}), vec({1.0}), grid, drv, DerivativeMode::LogRadial);
  CHECK(b.tangents.back()[0] == doctest::Approx(a.tangents.back()[0]).epsilon(1e-12));
}

TEST_CASE("derivative flow is the linearization of the flow") {
  const Scenario s = builtin("kunita");
  const BrownianDriver drv(21, 0, 2, 1e-3);
  const TimeGrid grid = TimeGrid::uniform(0.25, 1e-3);
  const Vector x0 = vec({0.6, -0.2});
  const Vector v = vec({0.3, 1.0});
  const double eps = 1e-5;
  const Trajectory plus = integrate_flow(s.system, x0 + eps * v, grid, drv);
  const Trajectory minus = integrate_flow(s.system, x0 - eps * v, grid, drv);
  const Trajectory d = integrate_derivative_flow(s.system, x0, v, grid, drv, DerivativeMode::Direct);
  const Vector fd = (plus.states.back() - minus.states.back()) / (2 * eps);
  CHECK((fd - d.tangents.back()).norm() < 1e-6 * (1.0 + fd.norm()));
}

TEST_CASE("sphere flow stays on the sphere with tangent derivative") {
  const Scenario s = builtin("sphere(3)");
  const TimeGrid grid = TimeGrid::uniform(1.0, 1e-3);
  const Vector x0 = vec({0.0, 0.0, 1.0});
  for (std::uint32_t path = 0; path < 10; ++path) {
    const BrownianDriver drv(77, path, 3, 1e-3);
    const Trajectory tr = integrate_derivative_flow(s.system, x0, vec({1.0, 0.0, 0.0}), grid, drv, DerivativeMode::LogRadial);
    for (std::size_t k = 0; k < tr.states.size(); k += 100) {
      CHECK(std::abs(tr.states[k].norm() - 1.0) <= 1e-12);
      CHECK(std::abs(tr.states[k].dot(tr.tangents[k])) <= 1e-12);
    }
  }
}

TEST_CASE("explosion of dx = x^2 dt is detected near t = 1") {
  const VectorFieldSystem s = expression_system(1, 1, {{"0"}}, {"x^2"});
  const Trajectory tr = integrate_flow(s, vec({1.0}), TimeGrid::uniform(2.0, 1e-3), BrownianDriver::zero(1, 1e-3));
  REQUIRE(tr.exploded);
  REQUIRE(tr.explosion_time.has_value());
  CHECK(*tr.explosion_time == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("punctured domain exits are flagged separately") {
  // dx = -x dt reaches the excluded ball of radius 0.5 around the origin at t = ln 2
  auto m = std::make_shared<const ManifoldModel>(ManifoldModel::punctured_flat(1, Vector::Zero(1), 0.5));
  ExpressionSystemSpec spec;
  spec.dim = 1;
  spec.noise_dim = 1;
  spec.diffusion = {{"0"}};
  spec.drift = {"-x"};
  const VectorFieldSystem s = system_from_expressions(spec, m);
  const Trajectory tr = integrate_flow(s, vec({1.0}), TimeGrid::uniform(2.0, 1e-3), BrownianDriver::zero(1, 1e-3));
  CHECK(tr.domain_exit);
  CHECK_FALSE(tr.exploded);
  CHECK(tr.states.back()[0] == doctest::Approx(0.5).epsilon(1e-2));
}

TEST_CASE("inadmissible initial data is rejected") {
  const Scenario s = builtin("sphere(3)");
  const BrownianDriver drv(0, 0, 3, 1e-3);
  CHECK_THROWS(integrate_flow(s.system, vec({0.0, 0.0, 2.0}), TimeGrid::uniform(0.1, 1e-3), drv));
  CHECK_THROWS_AS(integrate_derivative_flow(s.system, vec({0.0, 0.0, 1.0}), vec({0.0, 0.0, 1.0}),
                                            TimeGrid::uniform(0.1, 1e-3), drv, DerivativeMode::Direct),
                  ContractError);
}

TEST_CASE("exit steps for a radius rule") {
  const Scenario s = builtin("translation(1)");
  const FlowEngine engine(s.system, FlowOptions{1e6, DerivativeMode::None, false});
  const BrownianDriver drv(2, 0, 1, 1e-3);
  const TimeGrid grid = TimeGrid::uniform(1.0, 1e-3);
  const auto steps = exit_steps(engine, {vec({0.0}), vec({0.9})}, StopRule::exit_radius(1.0, vec({0.0})), grid, drv);
  const Trajectory tr = integrate_flow(s.system, vec({0.9}), grid, drv);
  long first = grid.steps;
  for (std::size_t k = 0; k < tr.states.size(); ++k)
    if (std::abs(tr.states[k][0]) >= 1.0) {
      first = static_cast<long>(k);
      break;
    }
  CHECK(steps[1] == first);
  CHECK(steps[0] >= 0);
}

TEST_CASE("curve transport under translation preserves length") {
  const Scenario s = builtin("translation(2)");
  const CurveSample c = CurveSample::segment(vec({0.0, 0.0}), vec({3.0, 4.0}), 11);
  CHECK(c.length() == doctest::Approx(5.0));
  const CurveTransport t = transport_curve(s.system, c, TimeGrid::uniform(1.0, 1e-3), BrownianDriver(6, 0, 2, 1e-3));
  CHECK(t.length == doctest::Approx(5.0).epsilon(1e-12));
  CHECK_FALSE(t.first_explosion_node.has_value());
}

TEST_CASE("trajectory CSV layout") {
  const Scenario s = builtin("translation(2)");
  const TimeGrid grid = TimeGrid::uniform(2e-3, 1e-3);
  const Trajectory tr = integrate_derivative_flow(s.system, vec({0.0, 0.0}), vec({1.0, 0.0}), grid,
                                                  BrownianDriver(1, 0, 2, 1e-3), DerivativeMode::Direct);
  std::ostringstream os;
  write_trajectory_csv(os, {tr}, 2, true);
  const std::string csv = os.str();
  CHECK(csv.rfind("path_id,step,time,x1,x2,v1,v2,exploded\r\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK(csv.find("0,0,0,0,0,1,0,0\r\n") != std::string::npos);
}
