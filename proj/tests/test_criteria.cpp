#include "doctest.h"

#include "flowlab/criteria.hpp"
#include "flowlab/scenarios.hpp"

#include <cmath>
#include <random>

using namespace flowlab;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<int>(v.size()));
  int i = 0;
  for (double e : v) out[i++] = e;
  return out;
}

struct TangentPair {
  Vector x, v;
};

TangentPair random_sphere_pair(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g;
  Vector x(n), u(n);
  for (int i = 0; i < n; ++i) x[i] = g(rng), u[i] = g(rng);
  x.normalize();
  return {x, u - u.dot(x) * x};
}

}  // namespace

TEST_CASE("sphere H_p equals (p + 1 - n)|v|^2 on both intrinsic backends") {
  std::mt19937_64 rng(31);
  for (int n : {3, 4, 5}) {
    const Scenario s = builtin("sphere(" + std::to_string(n) + ")");
    const CurvatureData* cd = s.curvature ? &*s.curvature : nullptr;
    for (int k = 0; k < 25; ++k) {
      const auto [x, v] = random_sphere_pair(rng, n);
      for (double p : {1.0, 2.0, 3.5}) {
        const double expected = (p + 1 - n) * v.squaredNorm();
        CHECK(eval_Hp(s.system, cd, x, v, p, HpBackend::Ricci) == doctest::Approx(expected).epsilon(1e-9).scale(1));
        CHECK(eval_Hp(s.system, cd, x, v, p, HpBackend::Gauss) == doctest::Approx(expected).epsilon(1e-9).scale(1));
      }
    }
  }
}

TEST_CASE("H_p is affine in p and quadratic in v") {
  const Scenario s = builtin("paraboloid");
  const Vector x = s.system.model().retract(vec({0.7, -0.4, 0.0}));
  const Matrix b = tangent_basis(s.system.model(), x);
  const Vector v = 0.3 * b.col(0) - 1.1 * b.col(1);
  for (HpBackend be : {HpBackend::Ricci, HpBackend::Gauss}) {
    const double h1 = eval_Hp(s.system, nullptr, x, v, 1.0, be);
    const double h2 = eval_Hp(s.system, nullptr, x, v, 2.0, be);
    const double h5 = eval_Hp(s.system, nullptr, x, v, 5.0, be);
    CHECK(h5 == doctest::Approx(h2 + 3.0 * (h2 - h1)).epsilon(1e-9));
    CHECK(eval_Hp(s.system, nullptr, x, 2.5 * v, 3.0, be) ==
          doctest::Approx(6.25 * eval_Hp(s.system, nullptr, x, v, 3.0, be)).epsilon(1e-9));
    CHECK(eval_Htilde(s.system, nullptr, x, v, be) == doctest::Approx(eval_Hp(s.system, nullptr, x, v, 0.0, be)));
  }
}

TEST_CASE("paraboloid backends agree") {
  const Scenario s = builtin("paraboloid");
  for (auto [a, c] : {std::pair{0.0, 0.0}, {1.0, 0.5}, {-2.0, 1.5}}) {
    const Vector x = vec({a, c, 0.5 * (a * a + c * c)});
    const Matrix b = tangent_basis(s.system.model(), x);
    for (int j = 0; j < 2; ++j) {
      const double r = eval_Hp(s.system, nullptr, x, b.col(j), 2.0, HpBackend::Ricci);
      const double g = eval_Hp(s.system, nullptr, x, b.col(j), 2.0, HpBackend::Gauss);
      CHECK(r == doctest::Approx(g).epsilon(1e-5).scale(1));
    }
  }
}

TEST_CASE("Euclidean H_p of OU is -2|v|^2 for every p") {
  const Scenario s = builtin("ou(2)");
  const Vector x = vec({0.3, -4.0}), v = vec({1.0, 2.0});
  for (double p : {1.0, 2.0, 6.0}) CHECK(eval_Hp(s.system, nullptr, x, v, p, HpBackend::Euclidean) == doctest::Approx(-10.0));
}

TEST_CASE("Euclidean H_p of the linear system is (2M + p sigma^2)|v|^2") {
  const Scenario s = builtin("linear(-1)");
  const Vector x = vec({2.0}), v = vec({3.0});
  for (double p : {1.0, 2.0, 4.0})
    CHECK(eval_Hp(s.system, nullptr, x, v, p, HpBackend::Euclidean) == doctest::Approx((-2.0 + 0.25 * p) * 9.0).epsilon(1e-8));
}

TEST_CASE("Euclidean H_p of the Kunita system by hand") {
  // DX^1 v = (v2, 0), DX^2 v = (0, x v1), Ito drift 0:
  // H_p = v2^2 + x^2 v1^2 + (p - 2) (1 + x^2) v1^2 v2^2 / |v|^2
  const Scenario s = builtin("kunita");
  const Vector x = vec({2.0, 1.0}), v = vec({1.0, 1.0});
  for (double p : {1.0, 2.0, 3.0})
    CHECK(eval_Hp(s.system, nullptr, x, v, p, HpBackend::Euclidean) == doctest::Approx(5.0 + 2.5 * (p - 2.0)).epsilon(1e-7));
}

TEST_CASE("backend availability") {
  CHECK(backend_available(builtin("ou(1)").system, HpBackend::Euclidean));
  CHECK_FALSE(backend_available(builtin("sphere(3)").system, HpBackend::Euclidean));
  CHECK(backend_available(builtin("sphere(3)").system, HpBackend::Gauss));
  CHECK_FALSE(backend_available(builtin("kunita").system, HpBackend::Gauss));
  CHECK_FALSE(preferred_backend(builtin("rescaled_punctured_plane").system).has_value());
  CHECK(parse_backend("ricci") == HpBackend::Ricci);
  CHECK_THROWS_AS(parse_backend("riemann"), ContractError);
}

TEST_CASE("Lyapunov bound for ln(1 + |x|^2)") {
  // translation: L g = (n (1 + r^2) - 2 r^2) / (1 + r^2)^2, largest (= n) at the origin.
  // OU(1) adds -2 r^2 / (1 + r^2), so k = 1.
  for (int n : {1, 2, 3}) {
    const Scenario s = builtin("translation(" + std::to_string(n) + ")");
    const LyapunovBound b = lyapunov_drift_bound(s.system, log_lyapunov(), RegionSpec{});
    CHECK(b.finite);
    CHECK_FALSE(b.unbounded_trend);
    CHECK(b.k == doctest::Approx(n).epsilon(1e-6));
  }
  const LyapunovBound ou = lyapunov_drift_bound(builtin("ou(1)").system, log_lyapunov(), RegionSpec{});
  CHECK(ou.k == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("Lyapunov bound detects growth") {
  ExpressionSystemSpec spec;
  spec.dim = 1;
  spec.noise_dim = 1;
  spec.diffusion = {{"0"}};
  spec.drift = {"x^3"};
  const VectorFieldSystem s = system_from_expressions(spec, std::make_shared<const ManifoldModel>(ManifoldModel::flat(1)));
  const LyapunovBound b = lyapunov_drift_bound(s, log_lyapunov(), RegionSpec{});
  CHECK((b.unbounded_trend || !b.finite));
}

TEST_CASE("condition sampling reports trends and witnesses") {
  const auto model = ManifoldModel::flat(2);
  RegionSpec r;
  r.radii = RegionSpec::log_radii(0.1, 100.0, 8);
  r.directions = 8;
  const auto samples = sample_region(model, r);
  CHECK(samples.size() == 8 * 8 + 1);
  const ConditionCheck grow = check_condition("r", samples, 8, [](const Vector& x) { return x.norm(); });
  CHECK(grow.unbounded_trend);
  CHECK_FALSE(grow.holds());
  REQUIRE(grow.witness.has_value());
  CHECK(grow.witness->norm() == doctest::Approx(100.0));
  const ConditionCheck flat = check_condition("c", samples, 8, [](const Vector& x) { return std::sin(x[0]); });
  CHECK(flat.holds());
  CHECK(flat.constant <= 1.0);
  const ConditionCheck neg = check_condition("n", samples, 8, [](const Vector&) { return -3.0; }, false);
  CHECK(neg.constant == -3.0);
  CHECK(check_condition("n", samples, 8, [](const Vector&) { return -3.0; }).constant == 0.0);
}

TEST_CASE("region sampling skips inadmissible points") {
  const auto model = ManifoldModel::punctured_flat(2, Vector::Zero(2));
  RegionSpec r;
  r.radii = {1.0, 2.0};
  r.directions = 4;
  const auto samples = sample_region(model, r);
  CHECK(samples.size() == 8);
  for (const auto& s : samples) CHECK(model.admissible(s.x));
}

TEST_CASE("direction sets are unit and deterministic") {
  for (int n : {1, 2, 3, 5}) {
    const auto d = direction_set(n, 12);
    const auto e = direction_set(n, 12);
    CHECK(d.size() == 12u);
    for (std::size_t i = 0; i < d.size(); ++i) {
      CHECK(d[i].norm() == doctest::Approx(1.0));
      CHECK((d[i] - e[i]).norm() == 0.0);
    }
  }
}

TEST_CASE("growth profiles on hand-checkable systems") {
  RegionSpec r;
  const GrowthProfile t = check_growth(builtin("translation(2)").system, GrowthKind::LinearGrowth, r);
  CHECK(t.all_hold());
  const GrowthProfile k = check_growth(builtin("kunita").system, GrowthKind::LinearGrowth, r);
  CHECK_FALSE(k.all_hold());
  GrowthOptions o;
  o.p = 2.0;
  o.backend = HpBackend::Euclidean;
  const GrowthProfile h = check_growth(builtin("ou(1)").system, GrowthKind::HBound, r, o);
  REQUIRE(h.conditions.size() == 1);
  CHECK(h.conditions[0].constant == doctest::Approx(-2.0));
}

TEST_CASE("certify: not applicable without a connection or a complete metric") {
  for (const char* name : {"rescaled_punctured_plane", "punctured_translation(2)"}) {
    const VerdictReport rep = certify(builtin(name).system, CertifyConfig{});
    for (const auto& e : rep.entries) CHECK(e.status == "not-applicable");
  }
}

TEST_CASE("certify: Kunita fails the Ito growth theorem with a witness") {
  const Scenario s = builtin("kunita");
  const VerdictReport rep = certify(s.system, CertifyConfig{});
  const VerdictEntry* e = rep.find("Thm6.2");
  REQUIRE(e != nullptr);
  CHECK(e->status == "failed");
  REQUIRE(e->failing_sample.has_value());
  CHECK(e->failing_sample->norm() > 1.0);
}

TEST_CASE("certify: positive controls") {
  CHECK(certify(builtin("ou(1)").system, CertifyConfig{}).find("Cor5.2")->status == "certified");
  CHECK(certify(builtin("translation(2)").system, CertifyConfig{}).find("Cor5.2")->status == "certified");
  const Scenario sp = builtin("sphere(3)");
  CertifyConfig c;
  c.curvature = sp.curvature ? &*sp.curvature : nullptr;
  const VerdictReport rep = certify(sp.system, c);
  CHECK(rep.find("Thm8.1")->status == "certified");
  CHECK(rep.find("Diffeo")->status == "certified");
}

TEST_CASE("certify: theorem selection and unknown ids") {
  CertifyConfig c;
  c.theorems = {"Thm5.1"};
  const VerdictReport rep = certify(builtin("ou(1)").system, c);
  REQUIRE(rep.entries.size() == 1);
  CHECK(rep.entries[0].theorem == "Thm5.1");
  c.theorems = {"Thm99"};
  CHECK_THROWS_AS(certify(builtin("ou(1)").system, c), ContractError);
}
