#pragma once

// Heun (Stratonovich predictor-corrector) stepping of the flow F_t(x) and of
// the derivative flow T_xF_t, with every member of an ensemble driven by the
// same Brownian increments.
//
// The derivative flow is the exact linearization of the discrete Heun map
// around the base trajectory, so v -> v_t is linear in v to the last bit in
// direct mode. In log-radial mode each frame column is stored as a unit
// direction and an accumulated log-norm, which keeps |v_t| representable
// when it grows or decays exponentially.

#include "flowlab/random.hpp"
#include "flowlab/systems.hpp"

#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <vector>

namespace flowlab {

struct TimeGrid {
  double dt = 1e-3;
  long steps = 0;

  double horizon() const { return dt * static_cast<double>(steps); }
  double time(long step) const { return dt * static_cast<double>(step); }

  /// steps = round(t / dt); throws unless t is an integer multiple of dt (to 1e-9 relative).
  static TimeGrid uniform(double t, double dt);
};

enum class DerivativeMode { None, Direct, LogRadial };

struct FlowOptions {
  double explosion_radius = 1e6;
  DerivativeMode mode = DerivativeMode::LogRadial;
  /// Track the martingale part M_t and its bracket for column 0 (log-radial only).
  bool track_martingale = false;
};

struct MemberState {
  Vector x;
  Matrix frame;                     // direct: v columns; log-radial: unit directions
  std::vector<double> log_scale;    // log |v| per column (log-radial), 0 in direct mode
  double martingale = 0.0;          // M_t for column 0
  double bracket = 0.0;             // <M>_t for column 0
  double log_norm_initial = 0.0;    // log |v_0| for column 0
  bool exploded = false;
  bool domain_exit = false;
  bool underflow = false;           // direct mode: |v| fell below 1e-300
  long stop_step = -1;              // step at which the member stopped evolving

  bool alive() const { return !exploded && !domain_exit; }
  int columns() const { return static_cast<int>(frame.cols()); }
  /// log |v_t| for column j (-inf for a zero column).
  double log_norm(int j) const;
  /// v_t for column j in ambient coordinates.
  Vector vector(int j) const;
  /// log of the operator norm of the frame map (largest singular value).
  double log_operator_norm() const;
  /// a_t = log|v_t| - log|v_0| - M_t + <M>_t / 2 for column 0.
  double finite_variation() const;
};

struct MemberInit {
  Vector x0;
  Matrix frame;  // may be empty (no derivative flow)
};

/// Called at step 0 (initial states) and after every step. Returning false
/// ends the path early.
using FlowObserver = std::function<bool(long step, double t, const std::vector<MemberState>&)>;

/// Reusable stepping engine. The system is converted to Stratonovich form
/// and finite-difference jacobians are supplied if missing.
class FlowEngine {
 public:
  FlowEngine(const VectorFieldSystem& system, FlowOptions options = {});

  const VectorFieldSystem& system() const { return system_; }
  const FlowOptions& options() const { return options_; }

  /// Runs one sample path for all members under a shared driver.
  /// `aggregation` fine driver steps make one grid step.
  std::vector<MemberState> run(const std::vector<MemberInit>& members, const TimeGrid& grid,
                               const BrownianDriver& driver, int aggregation = 1,
                               const FlowObserver& observer = {}) const;

  /// Validates x0 (admissible) and the frame (tangent columns).
  void check_initial(const MemberInit& m) const;

 private:
  struct Workspace;
  void step_member(MemberState& s, const Vector& db, double h, Workspace& w) const;
  void initialise(MemberState& s, const MemberInit& init) const;

  VectorFieldSystem system_;
  FlowOptions options_;
};

/// Aggregation factor of grid.dt over driver.fine_dt(); throws unless integral.
int aggregation_factor(const TimeGrid& grid, const BrownianDriver& driver);

struct Trajectory {
  std::vector<double> times;
  std::vector<Vector> states;
  std::vector<Vector> tangents;  // column 0 of the frame, when present
  bool exploded = false;
  bool domain_exit = false;
  long stop_step = -1;
  std::optional<double> explosion_time;
};

Trajectory integrate_flow(const VectorFieldSystem& system, const Vector& x0, const TimeGrid& grid,
                          const BrownianDriver& driver, const FlowOptions& options = {});

/// Paired trajectory (x_t, v_t). v0 = 0 gives the zero path.
Trajectory integrate_derivative_flow(const VectorFieldSystem& system, const Vector& x0,
                                     const Vector& v0, const TimeGrid& grid,
                                     const BrownianDriver& driver, DerivativeMode mode,
                                     const FlowOptions& options = {});

struct StopRule {
  enum class Kind { ExitRadius, ExitSet, Horizon };
  Kind kind = Kind::Horizon;
  double radius = 0.0;
  Vector center;
  std::function<bool(const Vector&)> inside;  // ExitSet: true while inside
  double horizon = 0.0;

  static StopRule exit_radius(double r, Vector center);
  static StopRule exit_set(std::function<bool(const Vector&)> inside);
  static StopRule at_horizon(double t);

  /// True when the rule fires for state x at time t.
  bool fires(const Vector& x, double t) const;
};

/// Per-member first step where the rule fires, for one sample path. Members
/// that explode count as exited at the explosion step. Members that never
/// exit get grid.steps.
std::vector<long> exit_steps(const FlowEngine& engine, const std::vector<Vector>& points,
                             const StopRule& rule, const TimeGrid& grid,
                             const BrownianDriver& driver);

/// Tracks first-firing steps for several rules while a path is running.
class StopTracker {
 public:
  StopTracker(std::vector<StopRule> rules, std::size_t members);
  void observe(long step, double t, const std::vector<MemberState>& states);
  /// First step at which `rule` fired for `member`, or -1.
  long step(std::size_t rule, std::size_t member) const { return first_[rule][member]; }
  /// min over members, -1 if no member has fired.
  long min_step(std::size_t rule) const;
  bool all_fired() const;

 private:
  std::vector<StopRule> rules_;
  std::vector<std::vector<long>> first_;
};

struct CurveSample {
  std::vector<double> s;        // parameter values, increasing
  std::vector<Vector> points;
  std::vector<Vector> tangents; // d sigma / ds
  static CurveSample segment(const Vector& a, const Vector& b, int nodes);
  double length() const;
};

struct CurveTransport {
  std::vector<Vector> points;
  std::vector<Vector> tangents;
  double length = 0.0;                    // +inf if any node exploded
  std::optional<std::size_t> first_explosion_node;
  double min_distance_to_excluded = std::numeric_limits<double>::infinity();
};

CurveTransport transport_curve(const VectorFieldSystem& system, const CurveSample& curve,
                               const TimeGrid& grid, const BrownianDriver& driver,
                               const FlowOptions& options = {});

/// Trajectory dump: path_id, step, time, x..., v..., exploded.
void write_trajectory_csv(std::ostream& os, const std::vector<Trajectory>& paths, int dim,
                          bool with_tangent);

}  // namespace flowlab
