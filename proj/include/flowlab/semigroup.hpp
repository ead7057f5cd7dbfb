#pragma once

// P_t f(x) = E f(F_t(x)) 1{t < xi} and the derivative semigroup on 1-forms
// delta P_t phi(v) = E phi(T_xF_t v) 1{t < xi}, with a common-noise check of
// d(P_t f) = delta P_t(df).

#include "flowlab/estimators.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace flowlab {

using OneForm = std::function<double(const Vector& x, const Vector& v)>;

struct ScalarObservable {
  std::function<double(const Vector&)> f;
  OneForm df;                          // empty: central differences on coordinate partials
  std::optional<double> sup_f;
  std::optional<double> sup_df;

  /// df(x, v), exactly linear in v in both the analytic and the difference form.
  double differential(const Vector& x, const Vector& v) const;
};

ScalarObservable observable_identity(int coordinate = 0);  // f(x) = x_i
ScalarObservable observable_square();                      // f(x) = |x|^2
ScalarObservable observable_sin(int coordinate = 0);       // f(x) = sin x_i
ScalarObservable observable_constant(double c);

MomentEstimate estimate_Ptf(const VectorFieldSystem& system, const ScalarObservable& obs, const Vector& x, double t,
                            const McConfig& cfg);

/// Uses direct-mode derivative flow, so the estimate is linear in v to the last bit.
MomentEstimate estimate_deltaPt(const VectorFieldSystem& system, const OneForm& phi, const Vector& x, const Vector& v,
                                double t, const McConfig& cfg);

struct FiniteDifferenceRung {
  double epsilon = 0.0;
  MomentEstimate lhs;          // (P_t f(x + eps v) - P_t f(x)) / eps, common noise
  double discrepancy = 0.0;    // lhs - rhs
  double combined_se = 0.0;    // sqrt(se_lhs^2 + se_rhs^2)
  double paired_se = 0.0;      // SE of the per-path difference
  bool pass = false;           // |discrepancy| <= 3 combined_se
};

struct ConsistencyReport {
  MomentEstimate rhs;                        // delta P_t(df)(v)
  std::vector<FiniteDifferenceRung> rungs;
  std::optional<double> richardson_slope;    // slope of log|discrepancy| against log eps
  std::vector<double> probe_nodes;           // r along sigma(r) = x + r v
  std::vector<MomentEstimate> probe;         // E |T_{sigma(r)}F_t(v)|
};

ConsistencyReport gradient_consistency_check(const VectorFieldSystem& system, const ScalarObservable& obs,
                                             const Vector& x, const Vector& v, double t, const McConfig& cfg,
                                             const std::vector<double>& epsilons = {1e-1, 1e-2, 1e-3});

/// P_t(P_s f)(x) with `inner_paths` paths per outer endpoint.
MomentEstimate estimate_nested(const VectorFieldSystem& system, const ScalarObservable& obs, const Vector& x,
                               double t, double s, const McConfig& cfg, long inner_paths);

}  // namespace flowlab
