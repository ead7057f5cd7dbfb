#include "flowlab/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace flowlab {

namespace {

constexpr double kRelativeStep = 1e-5;

double coordinate_step(double xj) { return kRelativeStep * std::max(1.0, std::abs(xj)); }

}  // namespace

Matrix Embedding::projection_derivative(const Vector& x, const Vector& v) const {
  const int m = ambient_dim();
  Matrix out = Matrix::Zero(m, m);
  Vector xp = x, xm = x;
  for (int j = 0; j < m; ++j) {
    if (v[j] == 0.0) continue;
    const double h = coordinate_step(x[j]);
    xp[j] = x[j] + h;
    xm[j] = x[j] - h;
    out += v[j] * ((projection(xp) - projection(xm)) / (2.0 * h));
    xp[j] = x[j];
    xm[j] = x[j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sphere

SphereEmbedding::SphereEmbedding(int ambient_dim, double radius) : n_(ambient_dim), radius_(radius) {
  if (ambient_dim < 2) throw ContractError("sphere needs ambient dimension >= 2");
  if (!(radius > 0.0)) throw ContractError("sphere radius must be positive");
}

std::string SphereEmbedding::name() const {
  return "sphere S^" + std::to_string(n_ - 1) + " in R^" + std::to_string(n_);
}

Matrix SphereEmbedding::projection(const Vector& x) const {
  const double s2 = x.squaredNorm();
  if (!(s2 > 0.0)) throw DomainError("sphere projection undefined at the origin");
  return Matrix::Identity(n_, n_) - x * x.transpose() / s2;
}

Matrix SphereEmbedding::projection_derivative(const Vector& x, const Vector& v) const {
  const double s2 = x.squaredNorm();
  if (!(s2 > 0.0)) throw DomainError("sphere projection undefined at the origin");
  const double xv = x.dot(v);
  return -(v * x.transpose() + x * v.transpose()) / s2 + (2.0 * xv / (s2 * s2)) * (x * x.transpose());
}

Vector SphereEmbedding::retract(const Vector& x) const {
  const double s = x.norm();
  if (!(s > 0.0) || !std::isfinite(s)) throw DomainError("cannot retract the origin onto the sphere");
  return (radius_ / s) * x;
}

double SphereEmbedding::residual(const Vector& x) const { return std::abs(x.norm() - radius_); }

std::optional<Vector> SphereEmbedding::analytic_second_fundamental_form(const Vector& x,
                                                                        const Vector& v,
                                                                        const Vector& w) const {
  return Vector(-(v.dot(w) / x.squaredNorm()) * x);
}

std::optional<double> SphereEmbedding::analytic_ricci(const Vector&, const Vector& v) const {
  return (n_ - 2) * v.squaredNorm() / (radius_ * radius_);
}

std::optional<std::pair<double, Vector>> SphereEmbedding::distance_from(const Vector& pole,
                                                                        const Vector& x) const {
  const Vector ph = pole.normalized();
  const Vector xh = x.normalized();
  const double c = std::clamp(xh.dot(ph), -1.0, 1.0);
  const double theta = std::acos(c);
  const double s = std::sin(theta);
  if (s < 1e-12) throw SingularPointError("distance gradient undefined at the base point or its antipode");
  Vector grad = -(ph - c * xh) / s;
  return std::make_pair(radius_ * theta, grad);
}

// ---------------------------------------------------------------------------
// Flat graph

FlatGraphEmbedding::FlatGraphEmbedding(int intrinsic_dim, int ambient_dim)
    : n_(intrinsic_dim), m_(ambient_dim) {
  if (intrinsic_dim < 1 || ambient_dim < intrinsic_dim)
    throw ContractError("flat graph embedding needs 1 <= n <= m");
}

std::string FlatGraphEmbedding::name() const {
  return "R^" + std::to_string(n_) + " x {0} in R^" + std::to_string(m_);
}

Matrix FlatGraphEmbedding::projection(const Vector&) const {
  Matrix p = Matrix::Zero(m_, m_);
  p.topLeftCorner(n_, n_).setIdentity();
  return p;
}

Matrix FlatGraphEmbedding::projection_derivative(const Vector&, const Vector&) const {
  return Matrix::Zero(m_, m_);
}

Vector FlatGraphEmbedding::retract(const Vector& x) const {
  Vector y = x;
  y.tail(m_ - n_).setZero();
  return y;
}

double FlatGraphEmbedding::residual(const Vector& x) const { return x.tail(m_ - n_).norm(); }

std::optional<Vector> FlatGraphEmbedding::analytic_second_fundamental_form(const Vector&,
                                                                           const Vector&,
                                                                           const Vector&) const {
  return Vector(Vector::Zero(m_));
}

std::optional<double> FlatGraphEmbedding::analytic_ricci(const Vector&, const Vector&) const {
  return 0.0;
}

std::optional<std::pair<double, Vector>> FlatGraphEmbedding::distance_from(const Vector& pole,
                                                                           const Vector& x) const {
  Vector d = Vector::Zero(m_);
  d.head(n_) = x.head(n_) - pole.head(n_);
  const double r = d.norm();
  if (!(r > 0.0)) throw SingularPointError("distance gradient undefined at the pole");
  return std::make_pair(r, Vector(d / r));
}

// ---------------------------------------------------------------------------
// Implicit level sets

ImplicitEmbedding::ImplicitEmbedding(std::string name, int ambient_dim, int codim,
                                     Constraint constraint, ConstraintJacobian jacobian)
    : name_(std::move(name)), m_(ambient_dim), k_(codim), c_(std::move(constraint)),
      jac_(std::move(jacobian)) {
  if (codim < 1 || codim >= ambient_dim) throw ContractError("implicit embedding needs 1 <= k < m");
  if (!c_) throw ContractError("implicit embedding needs a constraint function");
}

Matrix ImplicitEmbedding::constraint_jacobian(const Vector& x) const {
  if (jac_) return jac_(x);
  Matrix j(k_, m_);
  Vector xp = x, xm = x;
  for (int i = 0; i < m_; ++i) {
    const double h = coordinate_step(x[i]);
    xp[i] = x[i] + h;
    xm[i] = x[i] - h;
    j.col(i) = (c_(xp) - c_(xm)) / (2.0 * h);
    xp[i] = x[i];
    xm[i] = x[i];
  }
  return j;
}

Matrix ImplicitEmbedding::projection(const Vector& x) const {
  const Matrix j = constraint_jacobian(x);
  const Matrix gram = j * j.transpose();
  return Matrix::Identity(m_, m_) - j.transpose() * gram.ldlt().solve(j);
}

Vector ImplicitEmbedding::retract(const Vector& x) const {
  Vector y = x;
  for (int it = 0; it < 50; ++it) {
    const Vector c = c_(y);
    if (!c.allFinite()) throw DomainError("constraint not finite during retraction");
    if (c.norm() <= 1e-15 * (1.0 + y.norm())) break;
    const Matrix j = constraint_jacobian(y);
    y -= j.transpose() * (j * j.transpose()).ldlt().solve(c);
  }
  return y;
}

double ImplicitEmbedding::residual(const Vector& x) const { return c_(x).norm(); }

ParaboloidEmbedding::ParaboloidEmbedding()
    : ImplicitEmbedding(
          "paraboloid z = (x^2 + y^2)/2 in R^3", 3, 1,
          [](const Vector& x) {
            Vector c(1);
            c[0] = x[2] - 0.5 * (x[0] * x[0] + x[1] * x[1]);
            return c;
          },
          [](const Vector& x) {
            Matrix j(1, 3);
            j << -x[0], -x[1], 1.0;
            return j;
          }) {}

std::optional<double> ParaboloidEmbedding::analytic_ricci(const Vector& x, const Vector& v) const {
  const double g = 1.0 + x[0] * x[0] + x[1] * x[1];
  return v.squaredNorm() / (g * g);
}

// ---------------------------------------------------------------------------
// ManifoldModel

ManifoldModel ManifoldModel::flat(int n) {
  if (n < 1) throw ContractError("dimension must be positive");
  ManifoldModel m;
  m.kind_ = Kind::Flat;
  m.ambient_dim_ = m.intrinsic_dim_ = n;
  return m;
}

ManifoldModel ManifoldModel::punctured_flat(int n, Vector puncture, double epsilon) {
  if (puncture.size() != n) throw ContractError("puncture dimension mismatch");
  ManifoldModel m = flat(n);
  m.kind_ = Kind::PuncturedFlat;
  m.excluded_ = std::move(puncture);
  m.epsilon_ = epsilon;
  return m;
}

ManifoldModel ManifoldModel::rescaled_flat(int n, Weight weight, std::optional<Vector> excluded,
                                           double epsilon) {
  if (!weight) throw ContractError("rescaled metric needs a weight function");
  if (excluded && excluded->size() != n) throw ContractError("excluded point dimension mismatch");
  ManifoldModel m = flat(n);
  m.kind_ = Kind::RescaledFlat;
  m.weight_ = std::move(weight);
  m.excluded_ = std::move(excluded);
  m.epsilon_ = epsilon;
  return m;
}

ManifoldModel ManifoldModel::embedded(std::shared_ptr<const Embedding> embedding) {
  if (!embedding) throw ContractError("null embedding");
  ManifoldModel m;
  m.kind_ = Kind::Embedded;
  m.ambient_dim_ = embedding->ambient_dim();
  m.intrinsic_dim_ = embedding->intrinsic_dim();
  m.embedding_ = std::move(embedding);
  return m;
}

std::string ManifoldModel::kind_name() const {
  switch (kind_) {
    case Kind::Flat: return "flat";
    case Kind::PuncturedFlat: return "punctured-flat";
    case Kind::RescaledFlat: return "rescaled-flat";
    case Kind::Embedded: return "embedded";
  }
  return "?";
}

bool ManifoldModel::admissible(const Vector& x) const {
  if (x.size() != ambient_dim_ || !x.allFinite()) return false;
  if (excluded_ && (x - *excluded_).norm() <= epsilon_) return false;
  if (kind_ == Kind::RescaledFlat && !(weight_(x) > 0.0)) return false;
  if (kind_ == Kind::Embedded && embedding_->residual(x) > 1e-6 * (1.0 + x.norm())) return false;
  return true;
}

void ManifoldModel::require_admissible(const Vector& x) const {
  if (!admissible(x)) throw DomainError("point is not admissible for the " + kind_name() + " model");
}

Matrix ManifoldModel::projection(const Vector& x) const {
  if (kind_ == Kind::Embedded) return embedding_->projection(x);
  return Matrix::Identity(ambient_dim_, ambient_dim_);
}

Vector ManifoldModel::retract(const Vector& x) const {
  if (kind_ == Kind::Embedded) return embedding_->retract(x);
  return x;
}

double ManifoldModel::weight(const Vector& x) const {
  return kind_ == Kind::RescaledFlat ? weight_(x) : 1.0;
}

// ---------------------------------------------------------------------------
// Operations

void validate_curvature(const CurvatureData& data, const std::vector<double>& radii) {
  if (!data.sectional_lower_bound) return;
  double prev = -std::numeric_limits<double>::infinity();
  std::vector<double> sorted = radii;
  std::sort(sorted.begin(), sorted.end());
  for (double r : sorted) {
    const double l = data.sectional_lower_bound(r);
    if (!(l >= 1.0)) throw ContractError("curvature bound L(r) must be >= 1 (r = " + std::to_string(r) + ")");
    if (l < prev) throw ContractError("curvature bound L(r) must be nondecreasing (r = " + std::to_string(r) + ")");
    prev = l;
  }
}

double tangency_tolerance(const Vector& v) { return 1e-8 * (1.0 + v.norm()); }

bool is_tangent(const ManifoldModel& model, const Vector& x, const Vector& v) {
  if (model.kind() != ManifoldModel::Kind::Embedded) return true;
  return (v - model.projection(x) * v).norm() <= tangency_tolerance(v);
}

Vector tangent_project(const ManifoldModel& model, const Vector& x, const Vector& u) {
  model.require_admissible(x);
  if (u.size() != model.ambient_dim()) throw ContractError("vector dimension mismatch");
  if (model.kind() != ManifoldModel::Kind::Embedded) return u;
  return model.projection(x) * u;
}

Matrix tangent_basis(const ManifoldModel& model, const Vector& x) {
  if (model.kind() != ManifoldModel::Kind::Embedded)
    return Matrix::Identity(model.ambient_dim(), model.ambient_dim());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(model.projection(x));
  // eigenvalues ascending: the tangent block (eigenvalue 1) sits at the end
  return eig.eigenvectors().rightCols(model.intrinsic_dim());
}

namespace {

void require_tangent(const ManifoldModel& model, const Vector& x, const Vector& v, const char* what) {
  if (v.size() != model.ambient_dim()) throw ContractError(std::string(what) + ": dimension mismatch");
  if (!is_tangent(model, x, v)) throw ContractError(std::string(what) + " is not tangent at x");
}

}  // namespace

Vector second_fundamental_form(const ManifoldModel& model, const Vector& x, const Vector& v,
                               const Vector& w) {
  if (!model.has_connection()) throw CapabilityError("no second fundamental form for a rescaled metric");
  model.require_admissible(x);
  require_tangent(model, x, v, "v");
  require_tangent(model, x, w, "w");
  if (model.kind() != ManifoldModel::Kind::Embedded) return Vector::Zero(model.ambient_dim());
  const Embedding& e = *model.embedding();
  if (auto a = e.analytic_second_fundamental_form(x, v, w)) return *a;
  const Matrix p = e.projection(x);
  const Vector raw = e.projection_derivative(x, v) * w;
  return raw - p * raw;
}

Vector shape_operator(const ManifoldModel& model, const Vector& x, const Vector& v,
                      const Vector& nu) {
  const Matrix basis = tangent_basis(model, x);
  Vector out = Vector::Zero(model.ambient_dim());
  for (int j = 0; j < basis.cols(); ++j) {
    const Vector fj = basis.col(j);
    out += second_fundamental_form(model, x, v, fj).dot(nu) * fj;
  }
  return out;
}

Vector alpha_trace(const ManifoldModel& model, const Vector& x) {
  const Matrix basis = tangent_basis(model, x);
  Vector out = Vector::Zero(model.ambient_dim());
  for (int j = 0; j < basis.cols(); ++j) {
    const Vector fj = basis.col(j);
    out += second_fundamental_form(model, x, fj, fj);
  }
  return out;
}

double alpha_hs_norm_sq(const ManifoldModel& model, const Vector& x, const Vector& v) {
  const Matrix basis = tangent_basis(model, x);
  double s = 0.0;
  for (int j = 0; j < basis.cols(); ++j) {
    const Vector fj = basis.col(j);
    s += second_fundamental_form(model, x, v, fj).squaredNorm();
  }
  return s;
}

double ricci_via_gauss(const ManifoldModel& model, const Vector& x, const Vector& v) {
  return second_fundamental_form(model, x, v, v).dot(alpha_trace(model, x)) -
         alpha_hs_norm_sq(model, x, v);
}

double ricci(const ManifoldModel& model, const CurvatureData* curvature, const Vector& x,
             const Vector& v) {
  if (curvature && curvature->ricci) return curvature->ricci(x, v);
  switch (model.kind()) {
    case ManifoldModel::Kind::Flat:
    case ManifoldModel::Kind::PuncturedFlat: return 0.0;
    case ManifoldModel::Kind::RescaledFlat:
      throw CapabilityError("Ricci curvature not available for the rescaled metric");
    case ManifoldModel::Kind::Embedded:
      if (auto r = model.embedding()->analytic_ricci(x, v)) return *r;
      return ricci_via_gauss(model, x, v);
  }
  return 0.0;
}

double metric_norm(const ManifoldModel& model, const Vector& x, const Vector& v) {
  model.require_admissible(x);
  if (v.size() != model.ambient_dim()) throw ContractError("vector dimension mismatch");
  return model.weight(x) * v.norm();
}

bool has_pole_distance(const ManifoldModel& model) {
  switch (model.kind()) {
    case ManifoldModel::Kind::Flat:
    case ManifoldModel::Kind::PuncturedFlat: return true;
    case ManifoldModel::Kind::RescaledFlat: return false;
    case ManifoldModel::Kind::Embedded: {
      const Embedding& e = *model.embedding();
      const Vector probe = Vector::Zero(e.ambient_dim());
      // distance_from either returns a value or throws for closed-form embeddings
      try {
        Vector a = probe, b = probe;
        a[0] = 1.0;
        b[e.ambient_dim() - 1] = 1.0;
        return e.distance_from(a, b).has_value();
      } catch (const DomainError&) {
        return true;
      }
    }
  }
  return false;
}

PoleDistance pole_distance(const ManifoldModel& model, const CurvatureData& data, const Vector& x) {
  if (!data.pole) throw ContractError("pole_distance needs a pole");
  const Vector& pole = *data.pole;
  if (pole.size() != model.ambient_dim()) throw ContractError("pole dimension mismatch");
  PoleDistance out;
  switch (model.kind()) {
    case ManifoldModel::Kind::Flat:
    case ManifoldModel::Kind::PuncturedFlat: {
      if (x.size() != model.ambient_dim() || !x.allFinite()) throw DomainError("bad point");
      const Vector d = x - pole;
      out.r = d.norm();
      if (!(out.r > 0.0)) throw SingularPointError("dr is undefined at the pole");
      out.dr = d / out.r;
      break;
    }
    case ManifoldModel::Kind::RescaledFlat:
      throw CapabilityError("pole distance is not available for the rescaled metric");
    case ManifoldModel::Kind::Embedded: {
      auto d = model.embedding()->distance_from(pole, x);
      if (!d) throw CapabilityError("no closed-form distance for " + model.embedding()->name());
      out.r = d->first;
      out.dr = d->second;
      break;
    }
  }
  const double l = data.sectional_lower_bound ? data.sectional_lower_bound(out.r) : 1.0;
  out.hessian_bound = l / std::tanh(out.r * l);
  return out;
}

}  // namespace flowlab
