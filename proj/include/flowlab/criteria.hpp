#pragma once

// Pointwise H_p forms, growth conditions sampled over regions, Lyapunov
// drift bounds, and the verdict engine.
//
// H_p(x)(v,v) = 2<nabla A^X v, v> + sum <R(X^i,v)X^i, v> + sum |nabla X^i v|^2
//             + (p - 2) sum <nabla X^i v, v>^2 / |v|^2
//
// Three evaluation routes are offered: Euclidean (flat models, Itô drift),
// Ricci (noise with X X* = P, curvature from a Ricci callable) and Gauss
// (gradient systems, everything from the second fundamental form).

#include "flowlab/systems.hpp"

#include <optional>
#include <string>
#include <vector>

namespace flowlab {

enum class HpBackend { Euclidean, Ricci, Gauss };

std::string backend_name(HpBackend b);
HpBackend parse_backend(const std::string& name);

/// The pieces of H_p at (x, v):
///   H_p = drift + curvature + hs + (p - 2) q.
struct HpTerms {
  double drift = 0.0;      // 2 <nabla A^X v, v>
  double curvature = 0.0;  // sum <R(X^i, v) X^i, v>
  double hs = 0.0;         // sum |nabla X^i v|^2
  double q = 0.0;          // sum <nabla X^i v, v>^2 / |v|^2
  double value(double p) const { return drift + curvature + hs + (p - 2.0) * q; }
};

bool backend_available(const VectorFieldSystem& system, HpBackend backend, const Vector* probe = nullptr);

/// Backend used when none is requested: Euclidean on flat models, then
/// Ricci, then Gauss.
std::optional<HpBackend> preferred_backend(const VectorFieldSystem& system);

HpTerms hp_terms(const VectorFieldSystem& system, const CurvatureData* curvature, const Vector& x,
                 const Vector& v, HpBackend backend);

double eval_Hp(const VectorFieldSystem& system, const CurvatureData* curvature, const Vector& x,
               const Vector& v, double p, HpBackend backend);

/// The p = 0 member of the family.
double eval_Htilde(const VectorFieldSystem& system, const CurvatureData* curvature,
                   const Vector& x, const Vector& v, HpBackend backend);

// ---------------------------------------------------------------------------
// Drift pieces shared by the theorems

/// A^X at x (Itô drift for Itô systems on flat models).
Vector effective_drift_at(const VectorFieldSystem& system, const Vector& x);
/// nabla A^X (v).
Vector effective_drift_derivative(const VectorFieldSystem& system, const Vector& x, const Vector& v);
/// sum <R(X^i, v) X^i, v>: 0 on flat models, -Ric(v, v) for noise with X X* = P.
double curvature_term(const VectorFieldSystem& system, const CurvatureData* curvature,
                      const Vector& x, const Vector& v);

// ---------------------------------------------------------------------------
// Sampling

struct RegionSpec {
  std::optional<Vector> center;     // default: origin (flat) or a base point (embedded)
  std::vector<double> radii;        // default: 16 log-spaced radii in [0.1, 1e3]
  int directions = 32;
  bool include_center = true;

  static std::vector<double> log_radii(double r_min, double r_max, int count);
};

struct SamplePoint {
  Vector x;
  int shell = -1;        // index into radii, -1 for the center
  double radius = 0.0;
};

std::vector<SamplePoint> sample_region(const ManifoldModel& model, const RegionSpec& spec);
/// Resolved default radii / center for a model.
RegionSpec resolve_region(const ManifoldModel& model, const RegionSpec& spec);

/// Unit tangent directions at x: an orthonormal basis plus `extra` fixed mixtures.
std::vector<Vector> tangent_directions(const ManifoldModel& model, const Vector& x, int extra = 16);

/// Unit direction set of size `count` in R^n (deterministic low-discrepancy).
std::vector<Vector> direction_set(int n, int count);

struct ConditionCheck {
  std::string name;
  double constant = 0.0;                 // smallest c that works on every sample
  bool finite = true;
  bool unbounded_trend = false;
  std::optional<Vector> witness;         // point attaining the worst ratio
  double witness_ratio = 0.0;
  std::vector<double> shell_max;         // worst ratio per radius
  int samples = 0;
  bool holds() const { return finite && !unbounded_trend && samples > 0; }
};

/// Evaluates ratio(x) over the samples. Points where ratio throws a
/// DomainError are skipped. `clamp_zero` reports max(c, 0).
ConditionCheck check_condition(const std::string& name, const std::vector<SamplePoint>& samples,
                               std::size_t shells, const std::function<double(const Vector&)>& ratio,
                               bool clamp_zero = true);

enum class GrowthKind { LinearGrowth, SubLogDerivative, EpsilonExponent, PoleConditions, HBound };

std::string growth_kind_name(GrowthKind k);

struct GrowthOptions {
  double epsilon = 0.0;                      // EpsilonExponent
  double p = 2.0;                            // HBound
  std::optional<HpBackend> backend;          // HBound
  const CurvatureData* curvature = nullptr;  // PoleConditions, HBound
};

struct GrowthProfile {
  GrowthKind kind = GrowthKind::LinearGrowth;
  std::vector<ConditionCheck> conditions;
  std::vector<double> radii;
  std::string status = "sampled-only";
  bool all_hold() const;
};

GrowthProfile check_growth(const VectorFieldSystem& system, GrowthKind kind, const RegionSpec& region,
                           const GrowthOptions& options = {});

// ---------------------------------------------------------------------------
// Lyapunov functions

struct ScalarField {
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> gradient;
  std::function<Matrix(const Vector&)> hessian;
};

/// g(x) = ln(1 + |x|^2).
ScalarField log_lyapunov();
/// g(x) = c (1 + |x|^2)^eps.
ScalarField power_lyapunov(double c, double eps);
ScalarField constant_field(double value, int dim);

struct LyapunovBound {
  double k = 0.0;
  Vector argmax;
  bool finite = true;
  bool unbounded_trend = false;
};

/// k = sup of 1/2 sum |Dg(X^i)|^2 + 1/2 sum D^2g(X^i, X^i) + Dg(A) over the
/// region (Itô drift A), refined by a local pattern search around the best sample.
LyapunovBound lyapunov_drift_bound(const VectorFieldSystem& system, const ScalarField& g,
                                   const RegionSpec& region);

// ---------------------------------------------------------------------------
// Verdicts

struct VerdictEntry {
  std::string theorem;
  std::string status;                    // certified | failed | not-applicable | sampled-only
  std::vector<ConditionCheck> conditions;
  std::string note;
  std::optional<Vector> failing_sample;
};

struct VerdictReport {
  std::vector<VerdictEntry> entries;
  const VerdictEntry* find(const std::string& theorem) const;
};

struct CertifyConfig {
  std::vector<std::string> theorems;     // empty: all known ids
  double p = 2.0;
  double epsilon_growth = 0.0;           // for the epsilon-exponent corollary
  double epsilon_pole = 0.5;             // for the pole proposition
  RegionSpec region;
  std::optional<Vector> pole;
  const CurvatureData* curvature = nullptr;
  bool include_adjoint = true;           // needed for the diffeomorphism entry
};

/// All theorem ids understood by certify(), in report order.
const std::vector<std::string>& known_theorems();

VerdictReport certify(const VectorFieldSystem& system, const CertifyConfig& config);

}  // namespace flowlab
