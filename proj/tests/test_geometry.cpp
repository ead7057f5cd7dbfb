#include "doctest.h"

#include "flowlab/geometry.hpp"

#include <cmath>
#include <random>

using namespace flowlab;

namespace {

Vector random_unit(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g;
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = g(rng);
  return v.normalized();
}

Vector random_tangent(const ManifoldModel& m, const Vector& x, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Vector u(m.ambient_dim());
  for (int i = 0; i < u.size(); ++i) u[i] = g(rng);
  return m.projection(x) * u;
}

Vector paraboloid_point(double a, double b) {
  Vector x(3);
  x << a, b, 0.5 * (a * a + b * b);
  return x;
}

std::shared_ptr<const Embedding> sphere(int n, double rho = 1.0) {
  return std::make_shared<const SphereEmbedding>(n, rho);
}

}  // namespace

TEST_CASE("sphere projection is the orthogonal projector onto x-perp") {
  std::mt19937_64 rng(7);
  for (int n : {3, 4}) {
    const SphereEmbedding s(n, 2.0);
    for (int k = 0; k < 20; ++k) {
      const Vector x = 2.0 * random_unit(rng, n);
      const Matrix p = s.projection(x);
      CHECK((p * p - p).norm() < 1e-12);
      CHECK((p - p.transpose()).norm() < 1e-12);
      CHECK((p * x).norm() < 1e-12);
      CHECK(p.trace() == doctest::Approx(n - 1).epsilon(1e-12));
    }
  }
}

TEST_CASE("sphere second fundamental form matches -<v,w> x / rho^2") {
  std::mt19937_64 rng(11);
  const double rho = 1.5;
  auto m = ManifoldModel::embedded(sphere(4, rho));
  for (int k = 0; k < 20; ++k) {
    const Vector x = rho * random_unit(rng, 4);
    const Vector v = random_tangent(m, x, rng);
    const Vector w = random_tangent(m, x, rng);
    const Vector expected = -v.dot(w) * x / (rho * rho);
    CHECK((second_fundamental_form(m, x, v, w) - expected).norm() < 1e-10);
    // (D_v P) w from central differences of P along v
    const double h = 1e-6;
    const Vector fd = (m.projection(x + h * v) - m.projection(x - h * v)) / (2 * h) * w;
    CHECK((fd - expected).norm() < 1e-6);
  }
}

TEST_CASE("sphere Ricci curvature from Gauss's identity") {
  std::mt19937_64 rng(3);
  for (int n : {3, 4, 5}) {
    const double rho = 2.0;
    auto m = ManifoldModel::embedded(sphere(n, rho));
    for (int k = 0; k < 10; ++k) {
      const Vector x = rho * random_unit(rng, n);
      const Vector v = random_tangent(m, x, rng);
      const double expected = (n - 2) * v.squaredNorm() / (rho * rho);
      CHECK(ricci_via_gauss(m, x, v) == doctest::Approx(expected).epsilon(1e-10));
      CHECK(ricci(m, nullptr, x, v) == doctest::Approx(expected).epsilon(1e-10));
    }
  }
}

TEST_CASE("shape operator is adjoint to the second fundamental form") {
  std::mt19937_64 rng(5);
  auto m = ManifoldModel::embedded(sphere(3));
  const Vector x = random_unit(rng, 3);
  const Vector v = random_tangent(m, x, rng);
  const Vector w = random_tangent(m, x, rng);
  const Vector nu = 0.7 * x;
  CHECK(second_fundamental_form(m, x, v, w).dot(nu) == doctest::Approx(shape_operator(m, x, v, nu).dot(w)).epsilon(1e-10));
}

TEST_CASE("paraboloid Gauss curvature from the implicit machinery") {
  auto m = ManifoldModel::embedded(std::make_shared<const ParaboloidEmbedding>());
  std::mt19937_64 rng(1);
  for (auto [a, b] : {std::pair{0.0, 0.0}, {0.5, -0.3}, {1.2, 0.7}, {-2.0, 1.0}}) {
    const Vector x = paraboloid_point(a, b);
    CHECK(m.embedding()->residual(x) < 1e-12);
    const Vector v = random_tangent(m, x, rng);
    const double k = 1.0 / std::pow(1.0 + a * a + b * b, 2);
    CHECK(ricci_via_gauss(m, x, v) == doctest::Approx(k * v.squaredNorm()).epsilon(1e-5));
    CHECK(ricci(m, nullptr, x, v) == doctest::Approx(k * v.squaredNorm()).epsilon(1e-12));
  }
}

TEST_CASE("paraboloid retraction lands on the surface") {
  const ParaboloidEmbedding p;
  Vector x = paraboloid_point(0.8, -0.4);
  x += Vector::Constant(3, 1e-3);
  const Vector r = p.retract(x);
  CHECK(p.residual(r) < 1e-12);
  CHECK((r - x).norm() < 1e-2);
}

TEST_CASE("tangent basis is orthonormal and tangent") {
  auto m = ManifoldModel::embedded(std::make_shared<const ParaboloidEmbedding>());
  const Vector x = paraboloid_point(1.0, 2.0);
  const Matrix b = tangent_basis(m, x);
  REQUIRE(b.cols() == 2);
  CHECK((b.transpose() * b - Matrix::Identity(2, 2)).norm() < 1e-10);
  for (int j = 0; j < 2; ++j) CHECK(is_tangent(m, x, b.col(j)));
  const Matrix f = tangent_basis(ManifoldModel::flat(3), Vector::Zero(3));
  CHECK((f - Matrix::Identity(3, 3)).norm() == 0.0);
}

TEST_CASE("flat graph embedding is totally geodesic") {
  auto m = ManifoldModel::embedded(std::make_shared<const FlatGraphEmbedding>(2, 3));
  Vector x(3), v(3);
  x << 1, 2, 0;
  v << 0.3, -1, 0;
  CHECK(second_fundamental_form(m, x, v, v).norm() < 1e-12);
  CHECK(ricci_via_gauss(m, x, v) == doctest::Approx(0.0));
}

TEST_CASE("punctured model rejects the puncture") {
  auto m = ManifoldModel::punctured_flat(2, Vector::Zero(2));
  CHECK_FALSE(m.admissible(Vector::Zero(2)));
  CHECK(m.admissible(Vector::Constant(2, 1e-3)));
  CHECK_THROWS_AS(m.require_admissible(Vector::Zero(2)), DomainError);
  CHECK_FALSE(m.metric_complete());
  CHECK(m.has_connection());
}

TEST_CASE("rescaled metric norm and capabilities") {
  auto m = ManifoldModel::rescaled_flat(2, [](const Vector& x) { return 1.0 / x.norm(); }, Vector(Vector::Zero(2)));
  Vector x(2), v(2);
  x << 3, 4;
  v << 1, 0;
  CHECK(metric_norm(m, x, v) == doctest::Approx(0.2));
  CHECK_FALSE(m.has_connection());
  CurvatureData d;
  d.pole = Vector::Zero(2);
  CHECK_THROWS_AS(pole_distance(m, d, x), CapabilityError);
}

TEST_CASE("tangency checks") {
  auto m = ManifoldModel::embedded(sphere(3));
  Vector x(3), v(3);
  x << 0, 0, 1;
  v << 1, 0, 0;
  CHECK(is_tangent(m, x, v));
  CHECK_FALSE(is_tangent(m, x, x));
  CHECK((tangent_project(m, x, x + v) - v).norm() < 1e-15);
}

TEST_CASE("pole distance on the sphere is the geodesic angle") {
  auto m = ManifoldModel::embedded(sphere(3, 2.0));
  CurvatureData d;
  Vector pole(3), x(3);
  pole << 0, 0, 2;
  x << 2 * std::sin(0.7), 0, 2 * std::cos(0.7);
  d.pole = pole;
  const PoleDistance pd = pole_distance(m, d, x);
  CHECK(pd.r == doctest::Approx(1.4).epsilon(1e-12));
  CHECK(pd.dr.norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(is_tangent(m, x, pd.dr));
  // moving along dr increases the distance
  CHECK(pd.dr[0] > 0.0);
}

TEST_CASE("flat pole distance and its singular point") {
  auto m = ManifoldModel::flat(2);
  CurvatureData d;
  d.pole = Vector::Zero(2);
  Vector x(2);
  x << 3, 4;
  const PoleDistance pd = pole_distance(m, d, x);
  CHECK(pd.r == 5.0);
  CHECK(pd.hessian_bound == doctest::Approx(1.0 / std::tanh(5.0)));
  CHECK_THROWS_AS(pole_distance(m, d, Vector::Zero(2)), SingularPointError);
}

TEST_CASE("curvature bound validation") {
  CurvatureData d;
  d.sectional_lower_bound = [](double) { return 0.5; };
  CHECK_THROWS_AS(validate_curvature(d, {1.0, 2.0}), ContractError);
  d.sectional_lower_bound = [](double r) { return r < 2 ? 2.0 : 1.0; };
  CHECK_THROWS_AS(validate_curvature(d, {1.0, 3.0}), ContractError);
  d.sectional_lower_bound = [](double r) { return 1.0 + r; };
  CHECK_NOTHROW(validate_curvature(d, {1.0, 3.0}));
}

TEST_CASE("alpha trace on the sphere") {
  auto m = ManifoldModel::embedded(sphere(4));
  Vector x = Vector::Zero(4);
  x[3] = 1;
  CHECK((alpha_trace(m, x) + 3.0 * x).norm() < 1e-10);
  Vector v = Vector::Zero(4);
  v[0] = 2;
  // |alpha(v, .)|^2 = |v|^2 sum_j <v/|v|, f_j>^2 = |v|^2
  CHECK(alpha_hs_norm_sq(m, x, v) == doctest::Approx(4.0).epsilon(1e-10));
}
