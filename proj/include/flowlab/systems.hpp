#pragma once

// Stochastic dynamical systems dx = X(x) o dB + A(x) dt.
//
// Coefficients are ambient fields on R^n (n = model ambient dimension). All
// callables write into caller-owned storage so the stepping loop can run
// without allocating. Jacobians are ambient (Euclidean) derivatives:
//
//   diffusion_jacobian(x, v, J)  J.col(i) = DX^i(x) v      (n x m)
//   drift_jacobian(x, v, w)      w = DA(x) v
//
// Covariant versions on embedded models are obtained by projecting onto
// the tangent space, see covariant_diffusion_derivative().

#include "flowlab/geometry.hpp"
#include "flowlab/expression.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace flowlab {

enum class Calculus { Stratonovich, Ito };

std::string calculus_name(Calculus c);

class VectorFieldSystem {
 public:
  using DiffusionFn = std::function<void(const Vector& x, Matrix& out)>;
  using DriftFn = std::function<void(const Vector& x, Vector& out)>;
  using DiffusionJacobianFn = std::function<void(const Vector& x, const Vector& v, Matrix& out)>;
  using DriftJacobianFn = std::function<void(const Vector& x, const Vector& v, Vector& out)>;

  VectorFieldSystem(std::shared_ptr<const ManifoldModel> model, int noise_dim, Calculus calculus,
                    DiffusionFn diffusion, DriftFn drift, DiffusionJacobianFn diffusion_jacobian = {},
                    DriftJacobianFn drift_jacobian = {});

  int dim() const { return model_->ambient_dim(); }
  int noise_dim() const { return noise_dim_; }
  Calculus calculus() const { return calculus_; }
  const ManifoldModel& model() const { return *model_; }
  const std::shared_ptr<const ManifoldModel>& model_ptr() const { return model_; }

  bool has_diffusion_jacobian() const { return static_cast<bool>(dx_); }
  bool has_drift_jacobian() const { return static_cast<bool>(da_); }

  void diffusion(const Vector& x, Matrix& out) const { x_(x, out); }
  void drift(const Vector& x, Vector& out) const;
  void diffusion_jacobian(const Vector& x, const Vector& v, Matrix& out) const;
  void drift_jacobian(const Vector& x, const Vector& v, Vector& out) const;

  Matrix diffusion(const Vector& x) const;
  Vector drift(const Vector& x) const;
  /// X(x)e for a noise vector e.
  Vector apply_diffusion(const Vector& x, const Vector& e) const;

  /// True when X(x)X(x)* is the tangent projection by construction (gradient
  /// systems of an isometric embedding, constant orthonormal noise).
  bool isometric_noise() const { return isometric_; }
  /// Gradient Brownian system with drift Z (Z = drift()).
  bool gradient_system() const { return gradient_; }

  std::string label() const { return label_; }
  VectorFieldSystem with_label(std::string label) const;
  VectorFieldSystem with_structure(bool isometric_noise, bool gradient) const;

  // Raw access used by the algebra below.
  const DiffusionFn& diffusion_fn() const { return x_; }
  const DiffusionJacobianFn& diffusion_jacobian_fn() const { return dx_; }
  const DriftFn& drift_fn() const { return a_; }
  const DriftJacobianFn& drift_jacobian_fn() const { return da_; }
  double drift_sign() const { return drift_sign_; }

 private:
  friend VectorFieldSystem adjoint(const VectorFieldSystem&);
  friend VectorFieldSystem with_finite_difference_jacobians(const VectorFieldSystem&);

  std::shared_ptr<const ManifoldModel> model_;
  int noise_dim_;
  Calculus calculus_;
  DiffusionFn x_;
  DriftFn a_;
  DiffusionJacobianFn dx_;
  DriftJacobianFn da_;
  double drift_sign_ = 1.0;
  bool isometric_ = false;
  bool gradient_ = false;
  std::string label_;
};

/// Fills in missing jacobians with central differences (relative step 1e-5)
/// built from coordinate partials, so the result stays exactly linear in v.
VectorFieldSystem with_finite_difference_jacobians(const VectorFieldSystem& system);

/// Itô <-> Stratonovich: A_strat = A_ito - 1/2 sum DX^i(X^i).
VectorFieldSystem convert_calculus(const VectorFieldSystem& system, Calculus target);
VectorFieldSystem to_stratonovich(const VectorFieldSystem& system);

/// Same diffusion, negated drift. adjoint(adjoint(S)) evaluates identically to S.
VectorFieldSystem adjoint(const VectorFieldSystem& system);

struct DriftDecomposition {
  std::function<Vector(const Vector&)> effective;   // A^X
  std::function<Vector(const Vector&)> correction;  // 1/2 sum nabla X^i(X^i)
};

/// A^X = A + 1/2 sum nabla X^i(X^i), covariant (tangent-projected) on embedded models.
DriftDecomposition effective_drift(const VectorFieldSystem& system);

/// Directional derivative of A^X along v, by central differences of the
/// correction term plus the drift jacobian. Tangent-projected on embeddings.
Vector effective_drift_jacobian(const VectorFieldSystem& system, const Vector& x, const Vector& v);

/// Column i = nabla X^i(v) = P(x) DX^i(x) v.
void covariant_diffusion_derivative(const VectorFieldSystem& system, const Vector& x,
                                    const Vector& v, Matrix& out);
Matrix covariant_diffusion_derivative(const VectorFieldSystem& system, const Vector& x,
                                      const Vector& v);

/// nabla A(v) = P(x) DA(x) v.
Vector covariant_drift_derivative(const VectorFieldSystem& system, const Vector& x, const Vector& v);

/// X(x)e = P(x)e with drift Z. Flat models are treated as the identity embedding
/// (X = I). Z must be tangent at the probe points.
VectorFieldSystem gradient_brownian_from_embedding(
    std::shared_ptr<const ManifoldModel> model, VectorFieldSystem::DriftFn z = {},
    VectorFieldSystem::DriftJacobianFn dz = {}, const std::vector<Vector>& probe_points = {});

/// |X(x)X(x)* v - v| <= tol for the tangent basis at x.
bool check_isometric_noise(const VectorFieldSystem& system, const Vector& x, double tol = 1e-10);

struct ExpressionSystemSpec {
  int dim = 0;
  int noise_dim = 0;
  Calculus calculus = Calculus::Stratonovich;
  std::vector<std::vector<std::string>> diffusion;  // dim rows x noise_dim columns
  std::vector<std::string> drift;                   // dim entries
};

/// Parses coefficient expressions over x1..xn (aliases x, y, z); jacobians by
/// finite differences. Throws ExpressionError on malformed input.
VectorFieldSystem system_from_expressions(const ExpressionSystemSpec& spec,
                                          std::shared_ptr<const ManifoldModel> model);

}  // namespace flowlab
