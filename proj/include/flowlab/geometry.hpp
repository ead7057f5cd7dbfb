#pragma once

// Geometric backends: flat space, flat space with a puncture, a conformally
// rescaled flat metric, and isometrically embedded submanifolds of R^m.
//
// Embedded manifolds are described by their tangent projection field P(x),
// extended to a neighbourhood of M so that it can be differentiated in
// ambient coordinates. The normal projection is Y(x) = I - P(x). For tangent
// v, w the second fundamental form is alpha(v, w) = (D_v P) w, which is
// automatically normal because P (D_v P) P = 0.

#include "flowlab/types.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>

namespace flowlab {

struct PoleDistance {
  double r = 0.0;
  Vector dr;                  // gradient of r, a tangent vector at x
  double hessian_bound = 0.0; // L(r) coth(r L(r))
};

class Embedding {
 public:
  virtual ~Embedding() = default;

  virtual std::string name() const = 0;
  virtual int ambient_dim() const = 0;
  virtual int intrinsic_dim() const = 0;

  /// Tangent projection, defined on a neighbourhood of M.
  virtual Matrix projection(const Vector& x) const = 0;

  /// D_v P(x). Default: central differences of projection() along the
  /// coordinate axes (relative step 1e-5), combined linearly in v.
  virtual Matrix projection_derivative(const Vector& x, const Vector& v) const;

  /// Nearest-point style map onto M, used as the retraction after each step.
  virtual Vector retract(const Vector& x) const = 0;

  /// A nonnegative measure of how far x is from M (0 on M).
  virtual double residual(const Vector& x) const = 0;

  // Closed forms, when known. Empty optional means "use the generic route".
  virtual std::optional<Vector> analytic_second_fundamental_form(const Vector&, const Vector&,
                                                                 const Vector&) const {
    return std::nullopt;
  }
  virtual std::optional<double> analytic_ricci(const Vector&, const Vector&) const {
    return std::nullopt;
  }
  /// Intrinsic distance to `pole` with gradient; empty when no closed form exists.
  virtual std::optional<std::pair<double, Vector>> distance_from(const Vector& /*pole*/,
                                                                 const Vector& /*x*/) const {
    return std::nullopt;
  }
  virtual bool compact() const { return false; }
};

/// Round sphere of radius rho in R^n (intrinsic dimension n - 1).
class SphereEmbedding final : public Embedding {
 public:
  explicit SphereEmbedding(int ambient_dim, double radius = 1.0);

  std::string name() const override;
  int ambient_dim() const override { return n_; }
  int intrinsic_dim() const override { return n_ - 1; }
  Matrix projection(const Vector& x) const override;
  Matrix projection_derivative(const Vector& x, const Vector& v) const override;
  Vector retract(const Vector& x) const override;
  double residual(const Vector& x) const override;
  std::optional<Vector> analytic_second_fundamental_form(const Vector& x, const Vector& v,
                                                         const Vector& w) const override;
  std::optional<double> analytic_ricci(const Vector& x, const Vector& v) const override;
  std::optional<std::pair<double, Vector>> distance_from(const Vector& pole,
                                                         const Vector& x) const override;
  bool compact() const override { return true; }

  double radius() const { return radius_; }

 private:
  int n_;
  double radius_;
};

/// R^n sitting in R^m as x -> (x, 0). Totally geodesic.
class FlatGraphEmbedding final : public Embedding {
 public:
  FlatGraphEmbedding(int intrinsic_dim, int ambient_dim);

  std::string name() const override;
  int ambient_dim() const override { return m_; }
  int intrinsic_dim() const override { return n_; }
  Matrix projection(const Vector& x) const override;
  Matrix projection_derivative(const Vector& x, const Vector& v) const override;
  Vector retract(const Vector& x) const override;
  double residual(const Vector& x) const override;
  std::optional<Vector> analytic_second_fundamental_form(const Vector& x, const Vector& v,
                                                         const Vector& w) const override;
  std::optional<double> analytic_ricci(const Vector& x, const Vector& v) const override;
  std::optional<std::pair<double, Vector>> distance_from(const Vector& pole,
                                                         const Vector& x) const override;

 private:
  int n_, m_;
};

/// Level set M = {x in R^m : c(x) = 0} of a submersion c : R^m -> R^k.
/// The projection is I - J^T (J J^T)^{-1} J with J = Dc; its derivative and
/// hence the second fundamental form come from finite differences.
class ImplicitEmbedding : public Embedding {
 public:
  using Constraint = std::function<Vector(const Vector&)>;
  using ConstraintJacobian = std::function<Matrix(const Vector&)>;

  ImplicitEmbedding(std::string name, int ambient_dim, int codim, Constraint constraint,
                    ConstraintJacobian jacobian = {});

  std::string name() const override { return name_; }
  int ambient_dim() const override { return m_; }
  int intrinsic_dim() const override { return m_ - k_; }
  Matrix projection(const Vector& x) const override;
  Vector retract(const Vector& x) const override;
  double residual(const Vector& x) const override;

 protected:
  Matrix constraint_jacobian(const Vector& x) const;

 private:
  std::string name_;
  int m_, k_;
  Constraint c_;
  ConstraintJacobian jac_;
};

/// Paraboloid z = (x^2 + y^2) / 2 in R^3. Generic implicit machinery for the
/// extrinsic data; Gaussian curvature 1 / (1 + x^2 + y^2)^2 in closed form.
class ParaboloidEmbedding final : public ImplicitEmbedding {
 public:
  ParaboloidEmbedding();
  std::optional<double> analytic_ricci(const Vector& x, const Vector& v) const override;
};

class ManifoldModel {
 public:
  enum class Kind { Flat, PuncturedFlat, RescaledFlat, Embedded };
  using Weight = std::function<double(const Vector&)>;

  static ManifoldModel flat(int n);
  static ManifoldModel punctured_flat(int n, Vector puncture, double epsilon = 1e-9);
  /// Metric |v|# = w(x)|v|. `excluded`, if given, is removed from the domain.
  static ManifoldModel rescaled_flat(int n, Weight weight, std::optional<Vector> excluded = {},
                                     double epsilon = 1e-9);
  static ManifoldModel embedded(std::shared_ptr<const Embedding> embedding);

  Kind kind() const { return kind_; }
  std::string kind_name() const;
  int ambient_dim() const { return ambient_dim_; }
  int intrinsic_dim() const { return intrinsic_dim_; }
  const Embedding* embedding() const { return embedding_.get(); }
  const std::optional<Vector>& excluded_point() const { return excluded_; }
  double exclusion_radius() const { return epsilon_; }

  bool is_flat_metric() const { return kind_ == Kind::Flat || kind_ == Kind::PuncturedFlat; }
  /// False for the punctured plane: the puncture sits at finite distance.
  bool metric_complete() const { return kind_ != Kind::PuncturedFlat; }
  /// Only the rescaled metric ships without a connection.
  bool has_connection() const { return kind_ != Kind::RescaledFlat; }

  bool admissible(const Vector& x) const;
  void require_admissible(const Vector& x) const;

  Matrix projection(const Vector& x) const;
  Vector retract(const Vector& x) const;
  double weight(const Vector& x) const;

 private:
  Kind kind_ = Kind::Flat;
  int ambient_dim_ = 0;
  int intrinsic_dim_ = 0;
  std::optional<Vector> excluded_;
  double epsilon_ = 0.0;
  Weight weight_;
  std::shared_ptr<const Embedding> embedding_;
};

struct CurvatureData {
  std::function<double(const Vector& x, const Vector& v)> ricci;
  std::function<double(double r)> sectional_lower_bound;  // L(r) >= 1, nondecreasing
  std::optional<Vector> pole;
};

/// Throws ContractError unless L(r) >= 1 and L is nondecreasing on `radii`.
void validate_curvature(const CurvatureData& data, const std::vector<double>& radii);

double tangency_tolerance(const Vector& v);
bool is_tangent(const ManifoldModel& model, const Vector& x, const Vector& v);

Vector tangent_project(const ManifoldModel& model, const Vector& x, const Vector& u);

/// Orthonormal basis of T_xM as the columns of an ambient x intrinsic matrix.
Matrix tangent_basis(const ManifoldModel& model, const Vector& x);

Vector second_fundamental_form(const ManifoldModel& model, const Vector& x, const Vector& v,
                               const Vector& w);

/// Shape operator A_x(v, nu) with <alpha(v, w), nu> = <A_x(v, nu), w>.
Vector shape_operator(const ManifoldModel& model, const Vector& x, const Vector& v,
                      const Vector& nu);

/// trace alpha = sum_j alpha(f_j, f_j) over an orthonormal tangent basis.
Vector alpha_trace(const ManifoldModel& model, const Vector& x);

/// |alpha(v, .)|^2 in Hilbert-Schmidt norm.
double alpha_hs_norm_sq(const ManifoldModel& model, const Vector& x, const Vector& v);

/// Ric_x(v, v): explicit curvature data first, then closed forms, then the
/// Gauss formula for embeddings; zero on flat models.
double ricci(const ManifoldModel& model, const CurvatureData* curvature, const Vector& x,
             const Vector& v);

/// Ricci through Gauss's identity <alpha(v,v), tr alpha> - |alpha(v,.)|^2_HS.
double ricci_via_gauss(const ManifoldModel& model, const Vector& x, const Vector& v);

double metric_norm(const ManifoldModel& model, const Vector& x, const Vector& v);

PoleDistance pole_distance(const ManifoldModel& model, const CurvatureData& data, const Vector& x);

/// Whether pole_distance has a closed form for this model.
bool has_pole_distance(const ManifoldModel& model);

}  // namespace flowlab
