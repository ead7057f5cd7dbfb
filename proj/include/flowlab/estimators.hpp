#pragma once

// Monte Carlo estimators for moment functionals of the flow and its
// derivative. Path i is always driven by stream `stream_offset + i`, and
// per-path results are reduced in index order, so estimates depend on the
// seed only.

#include "flowlab/criteria.hpp"
#include "flowlab/flow.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace flowlab {

inline constexpr double kNormalQuantile95 = 1.959963984540054;

struct McConfig {
  long paths = 10000;
  double dt = 1e-3;
  double fine_dt = 0.0;          // driver resolution; 0 means dt
  std::uint64_t seed = 0;
  std::uint32_t stream_offset = 0;
  int workers = 1;
  FlowOptions flow;

  BrownianDriver driver(const VectorFieldSystem& system, long path) const;
};

struct MomentEstimate {
  double value = 0.0;            // log of the mean when log_space is set
  double std_error = 0.0;        // relative error (delta method) when log_space is set
  long n = 0;                    // paths that entered the mean
  double confidence = 0.95;
  double ci_low = 0.0;
  double ci_high = 0.0;
  long truncated = 0;            // paths that reached the explosion radius
  std::uint64_t seed = 0;
  bool lower_bound_only = false;
  bool valid = true;
  bool log_space = false;

  bool covers(double truth) const { return valid && !log_space && ci_low <= truth && truth <= ci_high; }
};

/// Mean, std / sqrt(N) and a 95% normal interval of the samples.
MomentEstimate summarize(const std::vector<double>& samples, std::uint64_t seed = 0);
/// Same for exp(log_samples), accumulated by log-sum-exp. Switches to log
/// space when the mean exceeds e^700.
MomentEstimate summarize_exp(const std::vector<double>& log_samples, std::uint64_t seed = 0);

/// Largest estimate over a grid, with the index attaining it.
struct GridEstimate {
  std::vector<MomentEstimate> per_point;
  MomentEstimate sup;
  std::size_t argmax = 0;
};

GridEstimate grid_supremum(std::vector<MomentEstimate> per_point);

// ---------------------------------------------------------------------------

/// sup_{x in K} E sup_{s<=t} |T_xF_s|^p (or the terminal |T_xF_t|^p). The
/// derivative norm is the operator norm on T_xM.
GridEstimate estimate_sup_derivative_moment(const VectorFieldSystem& system, const std::vector<Vector>& grid,
                                            double p, double t, const McConfig& cfg, bool terminal = false);

struct StoppedMomentResult {
  std::vector<double> radii;
  std::vector<GridEstimate> rungs;   // sup_K E(|T_xF_S| 1{S < t}) per radius
  std::vector<double> exit_fraction; // P(S_j^K < t)
  double liminf_proxy = 0.0;         // min over the three largest radii
};

/// S_j^K is the first time any member of K leaves the ball of radius R_j.
StoppedMomentResult estimate_stopped_moment(const VectorFieldSystem& system, const std::vector<Vector>& grid,
                                            const std::vector<double>& radii, double t, const McConfig& cfg,
                                            const std::optional<Vector>& center = std::nullopt);

struct ExpFunctionalResult {
  MomentEstimate estimate;  // E exp(theta int_0^t f(x_s) ds)
  MomentEstimate jensen;    // (1/t) int_0^t E exp(theta t f(x_s)) ds
};

ExpFunctionalResult estimate_exponential_functional(const VectorFieldSystem& system,
                                                    const std::function<double(const Vector&)>& f,
                                                    const Vector& x, double t, double theta, const McConfig& cfg);

/// Distance to the pole; 0 at the pole itself.
double radial_distance(const ManifoldModel& model, const CurvatureData& data, const Vector& x);

struct RadialMomentResult {
  MomentEstimate moment;                 // E (1 + r(x_t))^p
  std::vector<double> levels;
  std::vector<MomentEstimate> exit_probability;  // P(T_n < t)
  std::optional<double> bound;           // (1 + r(x_0))^p e^{k0 (1 + p^2) t}
  std::optional<bool> within_bound;
};

RadialMomentResult estimate_radial_moment(const VectorFieldSystem& system, const CurvatureData& data,
                                          const Vector& x0, double p, double t, const McConfig& cfg,
                                          const std::vector<double>& levels = {},
                                          std::optional<double> k0 = std::nullopt);

struct ExponentFit {
  double p = 1.0;
  std::vector<double> horizons;
  std::vector<double> log_moments;  // log sup_K E|T_xF_t|^p
  std::vector<double> residuals;
  std::vector<std::size_t> excluded; // horizons with a non-positive or invalid estimate
  double slope = 0.0;
  double intercept = 0.0;
};

/// Least-squares slope of log sup_K E|T_xF_t|^p against t, one fit per p,
/// all horizons from the same simulated paths.
std::vector<ExponentFit> estimate_moment_exponent(const VectorFieldSystem& system, const std::vector<Vector>& grid,
                                                  const std::vector<double>& ps, const std::vector<double>& horizons,
                                                  const McConfig& cfg);

/// sup_{|v|=1} H_1(x)(v, v) over the tangent direction sample.
double sup_h1(const VectorFieldSystem& system, const CurvatureData* curvature, const Vector& x, HpBackend backend);

/// sup_{x in K} E exp(1/2 int_0^T f(F_s(x)) ds) with f = sup_{|v|=1} H_1.
GridEstimate estimate_girsanov_one_completeness(const VectorFieldSystem& system, const std::vector<Vector>& grid,
                                                double horizon, const McConfig& cfg,
                                                const CurvatureData* curvature = nullptr,
                                                std::optional<HpBackend> backend = std::nullopt);

}  // namespace flowlab
