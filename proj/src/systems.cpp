#include "flowlab/systems.hpp"

#include <algorithm>
#include <cmath>

namespace flowlab {

namespace {

constexpr double kRelativeStep = 1e-5;

double coordinate_step(double xj) { return kRelativeStep * std::max(1.0, std::abs(xj)); }

// Sum_j v_j * (f(x + h_j e_j) - f(x - h_j e_j)) / (2 h_j), skipping v_j == 0.
template <class Value, class Eval>
void central_difference(const Vector& x, const Vector& v, Value& out, Value& plus, Value& minus,
                        Eval&& eval) {
  Vector xs = x;
  bool first = true;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    if (v[j] == 0.0) continue;
    const double h = coordinate_step(x[j]);
    xs[j] = x[j] + h;
    eval(xs, plus);
    xs[j] = x[j] - h;
    eval(xs, minus);
    xs[j] = x[j];
    if (first) {
      out = v[j] * ((plus - minus) / (2.0 * h));
      first = false;
    } else {
      out += v[j] * ((plus - minus) / (2.0 * h));
    }
  }
  if (first) {
    eval(x, plus);
    out = Value::Zero(plus.rows(), plus.cols());
  }
}

Vector correction_term(const VectorFieldSystem& s, const Vector& x) {
  const Matrix X = s.diffusion(x);
  Vector out = Vector::Zero(s.dim());
  Matrix j(s.dim(), s.noise_dim());
  for (int i = 0; i < s.noise_dim(); ++i) {
    s.diffusion_jacobian(x, X.col(i), j);
    out += j.col(i);
  }
  return 0.5 * out;
}

}  // namespace

std::string calculus_name(Calculus c) { return c == Calculus::Ito ? "ito" : "stratonovich"; }

VectorFieldSystem::VectorFieldSystem(std::shared_ptr<const ManifoldModel> model, int noise_dim,
                                     Calculus calculus, DiffusionFn diffusion, DriftFn drift,
                                     DiffusionJacobianFn diffusion_jacobian,
                                     DriftJacobianFn drift_jacobian)
    : model_(std::move(model)), noise_dim_(noise_dim), calculus_(calculus),
      x_(std::move(diffusion)), a_(std::move(drift)), dx_(std::move(diffusion_jacobian)),
      da_(std::move(drift_jacobian)) {
  if (!model_) throw ContractError("system needs a manifold model");
  if (noise_dim < 1) throw ContractError("noise dimension must be positive");
  if (!x_) throw ContractError("system needs a diffusion field");
}

void VectorFieldSystem::drift(const Vector& x, Vector& out) const {
  if (!a_) {
    out.setZero(dim());
    return;
  }
  a_(x, out);
  if (drift_sign_ < 0.0) out = -out;
}

void VectorFieldSystem::diffusion_jacobian(const Vector& x, const Vector& v, Matrix& out) const {
  if (!dx_) throw CapabilityError("diffusion jacobian not available");
  dx_(x, v, out);
}

void VectorFieldSystem::drift_jacobian(const Vector& x, const Vector& v, Vector& out) const {
  if (!a_) {
    out.setZero(dim());
    return;
  }
  if (!da_) throw CapabilityError("drift jacobian not available");
  da_(x, v, out);
  if (drift_sign_ < 0.0) out = -out;
}

Matrix VectorFieldSystem::diffusion(const Vector& x) const {
  Matrix m(dim(), noise_dim_);
  x_(x, m);
  return m;
}

Vector VectorFieldSystem::drift(const Vector& x) const {
  Vector a(dim());
  drift(x, a);
  return a;
}

Vector VectorFieldSystem::apply_diffusion(const Vector& x, const Vector& e) const {
  return diffusion(x) * e;
}

VectorFieldSystem VectorFieldSystem::with_label(std::string label) const {
  VectorFieldSystem s = *this;
  s.label_ = std::move(label);
  return s;
}

VectorFieldSystem VectorFieldSystem::with_structure(bool isometric_noise, bool gradient) const {
  VectorFieldSystem s = *this;
  s.isometric_ = isometric_noise;
  s.gradient_ = gradient;
  return s;
}

VectorFieldSystem with_finite_difference_jacobians(const VectorFieldSystem& system) {
  VectorFieldSystem s = system;
  const int n = s.dim();
  const int m = s.noise_dim();
  if (!s.dx_) {
    auto x = s.x_;
    s.dx_ = [x, n, m](const Vector& p, const Vector& v, Matrix& out) {
      Matrix plus(n, m), minus(n, m);
      central_difference(p, v, out, plus, minus, [&](const Vector& q, Matrix& o) { x(q, o); });
    };
  }
  if (!s.da_ && s.a_) {
    auto a = s.a_;
    s.da_ = [a, n](const Vector& p, const Vector& v, Vector& out) {
      Vector plus(n), minus(n);
      central_difference(p, v, out, plus, minus, [&](const Vector& q, Vector& o) { a(q, o); });
    };
  }
  return s;
}

VectorFieldSystem convert_calculus(const VectorFieldSystem& system, Calculus target) {
  if (system.calculus() == target) return system;
  if (!system.has_diffusion_jacobian())
    throw CapabilityError("calculus conversion needs the diffusion jacobian");
  // Stratonovich -> Itô adds the correction, Itô -> Stratonovich removes it.
  const double sign = target == Calculus::Ito ? 1.0 : -1.0;
  auto base = std::make_shared<VectorFieldSystem>(system);
  const int n = system.dim();
  VectorFieldSystem::DriftFn drift = [base, sign](const Vector& x, Vector& out) {
    base->drift(x, out);
    out += sign * correction_term(*base, x);
  };
  VectorFieldSystem::DriftJacobianFn drift_jac;
  if (system.has_drift_jacobian() || !system.drift_fn()) {
    drift_jac = [base, sign, n](const Vector& x, const Vector& v, Vector& out) {
      base->drift_jacobian(x, v, out);
      Vector fd(n), plus(n), minus(n);
      central_difference(x, v, fd, plus, minus,
                         [&](const Vector& q, Vector& o) { o = correction_term(*base, q); });
      out += sign * fd;
    };
  }
  VectorFieldSystem out(system.model_ptr(), system.noise_dim(), target, system.diffusion_fn(),
                        std::move(drift), system.diffusion_jacobian_fn(), std::move(drift_jac));
  return out.with_structure(system.isometric_noise(), system.gradient_system())
      .with_label(system.label());
}

VectorFieldSystem to_stratonovich(const VectorFieldSystem& system) {
  return convert_calculus(system, Calculus::Stratonovich);
}

VectorFieldSystem adjoint(const VectorFieldSystem& system) {
  if (system.calculus() != Calculus::Stratonovich)
    throw ContractError("adjoint is defined for Stratonovich systems");
  VectorFieldSystem s = system;
  s.drift_sign_ = -s.drift_sign_;
  return s;
}

void covariant_diffusion_derivative(const VectorFieldSystem& system, const Vector& x,
                                    const Vector& v, Matrix& out) {
  system.diffusion_jacobian(x, v, out);
  if (system.model().kind() == ManifoldModel::Kind::Embedded) out = system.model().projection(x) * out;
}

Matrix covariant_diffusion_derivative(const VectorFieldSystem& system, const Vector& x,
                                      const Vector& v) {
  Matrix out(system.dim(), system.noise_dim());
  covariant_diffusion_derivative(system, x, v, out);
  return out;
}

Vector covariant_drift_derivative(const VectorFieldSystem& system, const Vector& x, const Vector& v) {
  Vector out(system.dim());
  system.drift_jacobian(x, v, out);
  if (system.model().kind() == ManifoldModel::Kind::Embedded) out = system.model().projection(x) * out;
  return out;
}

DriftDecomposition effective_drift(const VectorFieldSystem& system) {
  if (system.calculus() != Calculus::Stratonovich)
    throw ContractError("effective drift needs the Stratonovich representation");
  if (!system.has_diffusion_jacobian()) throw CapabilityError("effective drift needs the diffusion jacobian");
  auto s = std::make_shared<VectorFieldSystem>(system);
  DriftDecomposition d;
  d.correction = [s](const Vector& x) -> Vector {
    Vector c = correction_term(*s, x);
    if (s->model().kind() == ManifoldModel::Kind::Embedded) c = s->model().projection(x) * c;
    return c;
  };
  d.effective = [s, corr = d.correction](const Vector& x) -> Vector { return s->drift(x) + corr(x); };
  return d;
}

Vector effective_drift_jacobian(const VectorFieldSystem& system, const Vector& x, const Vector& v) {
  const DriftDecomposition d = effective_drift(system);
  const int n = system.dim();
  Vector out(n);
  system.drift_jacobian(x, v, out);
  Vector fd(n), plus(n), minus(n);
  central_difference(x, v, fd, plus, minus,
                     [&](const Vector& q, Vector& o) { o = d.correction(q); });
  out += fd;
  if (system.model().kind() == ManifoldModel::Kind::Embedded) out = system.model().projection(x) * out;
  return out;
}

VectorFieldSystem gradient_brownian_from_embedding(std::shared_ptr<const ManifoldModel> model,
                                                   VectorFieldSystem::DriftFn z,
                                                   VectorFieldSystem::DriftJacobianFn dz,
                                                   const std::vector<Vector>& probe_points) {
  if (!model) throw ContractError("null model");
  if (!model->has_connection()) throw CapabilityError("gradient systems need an isometric embedding");
  const int m = model->ambient_dim();
  VectorFieldSystem::DiffusionFn x;
  VectorFieldSystem::DiffusionJacobianFn dx;
  if (model->kind() == ManifoldModel::Kind::Embedded) {
    const ManifoldModel* mp = model.get();
    x = [mp](const Vector& p, Matrix& out) { out = mp->projection(p); };
    dx = [mp](const Vector& p, const Vector& v, Matrix& out) {
      out = mp->embedding()->projection_derivative(p, v);
    };
  } else {
    x = [m](const Vector&, Matrix& out) { out.setIdentity(m, m); };
    dx = [m](const Vector&, const Vector&, Matrix& out) { out.setZero(m, m); };
  }
  if (z) {
    for (const Vector& p : probe_points) {
      Vector zp(m);
      z(p, zp);
      if (!is_tangent(*model, p, zp)) throw ContractError("drift Z is not tangent to the manifold");
    }
  }
  VectorFieldSystem s(model, m, Calculus::Stratonovich, std::move(x), std::move(z), std::move(dx),
                      std::move(dz));
  return with_finite_difference_jacobians(s).with_structure(true, true);
}

bool check_isometric_noise(const VectorFieldSystem& system, const Vector& x, double tol) {
  const Matrix X = system.diffusion(x);
  const Matrix basis = tangent_basis(system.model(), x);
  for (int j = 0; j < basis.cols(); ++j) {
    const Vector v = basis.col(j);
    if ((X * (X.transpose() * v) - v).norm() > tol * (1.0 + v.norm())) return false;
  }
  return true;
}

VectorFieldSystem system_from_expressions(const ExpressionSystemSpec& spec,
                                          std::shared_ptr<const ManifoldModel> model) {
  if (!model) throw ContractError("null model");
  const int n = spec.dim;
  const int m = spec.noise_dim;
  if (n != model->ambient_dim()) throw ContractError("system dimension does not match the model");
  if (static_cast<int>(spec.diffusion.size()) != n)
    throw ContractError("diffusion must have " + std::to_string(n) + " rows");
  for (const auto& row : spec.diffusion)
    if (static_cast<int>(row.size()) != m)
      throw ContractError("each diffusion row must have " + std::to_string(m) + " entries");
  if (!spec.drift.empty() && static_cast<int>(spec.drift.size()) != n)
    throw ContractError("drift must have " + std::to_string(n) + " entries");

  const auto names = state_variable_names(n);
  auto diff = std::make_shared<std::vector<Expression>>();
  for (const auto& row : spec.diffusion)
    for (const auto& e : row) diff->push_back(Expression::parse(e, names));
  auto drift = std::make_shared<std::vector<Expression>>();
  for (const auto& e : spec.drift) drift->push_back(Expression::parse(e, names));

  VectorFieldSystem::DiffusionFn x = [diff, n, m](const Vector& p, Matrix& out) {
    thread_local std::vector<double> vars;
    bind_state_variables({p.data(), static_cast<std::size_t>(p.size())}, vars);
    out.resize(n, m);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < m; ++k) out(i, k) = (*diff)[static_cast<std::size_t>(i * m + k)](vars);
  };
  VectorFieldSystem::DriftFn a;
  if (!drift->empty()) {
    a = [drift, n](const Vector& p, Vector& out) {
      thread_local std::vector<double> vars;
      bind_state_variables({p.data(), static_cast<std::size_t>(p.size())}, vars);
      out.resize(n);
      for (int i = 0; i < n; ++i) out[i] = (*drift)[static_cast<std::size_t>(i)](vars);
    };
  }
  VectorFieldSystem s(std::move(model), m, spec.calculus, std::move(x), std::move(a));
  return with_finite_difference_jacobians(s);
}

}  // namespace flowlab
