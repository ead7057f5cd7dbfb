#pragma once

// Built-in systems with closed-form pathwise solutions where one exists,
// plus the negative controls.
//
//   translation(n)            dx = dB on R^n, F_t(x) = x + B_t
//   punctured_translation(n)  same SDE on R^n minus the origin
//   rescaled_punctured_plane  same SDE on R^2 minus 0 with |v|# = |v| / |x|
//   inversion_plane           image of translation under z -> 1/z, F_t(z) = z / (1 + z B_t)
//   ou(n)                     dx = dB - x dt
//   kunita                    Itô, X = diag(y, x^2/2), A = 0
//   sphere(n)                 gradient Brownian system on S^{n-1} in R^n
//   paraboloid                gradient Brownian system on z = (x^2 + y^2) / 2
//   linear(M)                 dx = sigma x o dB + M x dt, sigma = 1/2

#include "flowlab/criteria.hpp"
#include "flowlab/flow.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace flowlab {

struct OracleTrajectory {
  std::vector<double> times;
  std::vector<Vector> states;
  bool singular = false;            // the closed form hit (or came close to) a pole
  double min_denominator = 0.0;     // inversion: min |1 + z B_s| over the fine grid
};

/// Exact solution driven by the same Brownian path as the integrator: the
/// closed form is evaluated at every fine driver step and reported on `grid`.
using OracleFn = std::function<OracleTrajectory(const Vector& x0, const BrownianDriver& driver, const TimeGrid& grid)>;

struct Scenario {
  std::string name;
  std::shared_ptr<const ManifoldModel> model;
  VectorFieldSystem system;
  Vector default_x0;
  double default_t = 1.0;
  std::optional<CurvatureData> curvature;
  OracleFn oracle;
  std::map<std::string, std::string> expected_verdicts;
  std::string notes;
  std::optional<std::string> warning;
};

/// Oracle singularity threshold for the inversion flow: a path is flagged
/// when |1 + z B_s| drops below this value (|F_s(z)| above 10 |z|).
inline constexpr double kInversionSingularThreshold = 0.1;

/// Parses "name" or "name(args)"; throws ContractError for unknown names or bad arguments.
Scenario builtin(const std::string& spec);

/// Names with their default arguments, in listing order.
std::vector<std::string> builtin_names();

OracleTrajectory oracle_flow(const Scenario& scenario, const Vector& x0, const BrownianDriver& driver,
                             const TimeGrid& grid);

}  // namespace flowlab
