#include "flowlab/flow.hpp"
#include "flowlab/parallel.hpp"

#include <charconv>
#include <cmath>
#include <ostream>

namespace flowlab {

int default_worker_count() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void put_double(std::ostream& os, double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  os.write(buf, p - buf);
}

}  // namespace

TimeGrid TimeGrid::uniform(double t, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ContractError("time step must be positive");
  if (!(t >= 0.0) || !std::isfinite(t)) throw ContractError("horizon must be nonnegative");
  const long steps = std::lround(t / dt);
  if (std::abs(static_cast<double>(steps) * dt - t) > 1e-9 * std::max(t, dt))
    throw ContractError("horizon " + std::to_string(t) + " is not a multiple of dt " + std::to_string(dt));
  return TimeGrid{dt, steps};
}

int aggregation_factor(const TimeGrid& grid, const BrownianDriver& driver) {
  const double r = grid.dt / driver.fine_dt();
  const long a = std::lround(r);
  if (a < 1 || std::abs(static_cast<double>(a) - r) > 1e-9 * r)
    throw ContractError("grid step must be an integer multiple of the driver step");
  return static_cast<int>(a);
}

// ---------------------------------------------------------------------------
// MemberState

double MemberState::log_norm(int j) const {
  if (!log_scale.empty() && log_scale[static_cast<std::size_t>(j)] == kNegInf) return kNegInf;
  const double n = frame.col(j).norm();
  if (n == 0.0) return kNegInf;
  return std::log(n) + (log_scale.empty() ? 0.0 : log_scale[static_cast<std::size_t>(j)]);
}

Vector MemberState::vector(int j) const {
  if (log_scale.empty()) return frame.col(j);
  const double l = log_scale[static_cast<std::size_t>(j)];
  if (l == kNegInf) return Vector::Zero(frame.rows());
  return std::exp(l) * frame.col(j);
}

double MemberState::log_operator_norm() const {
  if (frame.cols() == 0) return kNegInf;
  if (frame.cols() == 1) return log_norm(0);
  double lmax = kNegInf;
  for (double l : log_scale) lmax = std::max(lmax, l);
  Matrix scaled = frame;
  if (!log_scale.empty()) {
    if (lmax == kNegInf) return kNegInf;
    for (int j = 0; j < frame.cols(); ++j)
      scaled.col(j) *= std::exp(log_scale[static_cast<std::size_t>(j)] - lmax);
  } else {
    lmax = 0.0;
  }
  Eigen::JacobiSVD<Matrix> svd(scaled);
  const double s = svd.singularValues()(0);
  if (s == 0.0) return kNegInf;
  return lmax + std::log(s);
}

double MemberState::finite_variation() const {
  return log_norm(0) - log_norm_initial - martingale + 0.5 * bracket;
}

// ---------------------------------------------------------------------------
// FlowEngine

struct FlowEngine::Workspace {
  Matrix x0m, x1m, j0, j1;
  Vector a0, a1, xp, xn, d0, d1, up, un, xdb;
  Matrix next_frame;
};

FlowEngine::FlowEngine(const VectorFieldSystem& system, FlowOptions options)
    : system_(with_finite_difference_jacobians(to_stratonovich(with_finite_difference_jacobians(system)))),
      options_(options) {
  if (!(options_.explosion_radius > 0.0)) throw ContractError("explosion radius must be positive");
}

void FlowEngine::check_initial(const MemberInit& m) const {
  const ManifoldModel& model = system_.model();
  if (m.x0.size() != system_.dim()) throw ContractError("initial point has the wrong dimension");
  model.require_admissible(m.x0);
  if (m.frame.size() == 0) return;
  if (m.frame.rows() != system_.dim()) throw ContractError("initial vector has the wrong dimension");
  for (int j = 0; j < m.frame.cols(); ++j)
    if (!is_tangent(model, m.x0, m.frame.col(j)))
      throw ContractError("initial vector is not tangent at x0");
}

void FlowEngine::initialise(MemberState& s, const MemberInit& init) const {
  s = MemberState{};
  s.x = init.x0;
  if (options_.mode == DerivativeMode::None || init.frame.size() == 0) {
    s.frame.resize(system_.dim(), 0);
    return;
  }
  s.frame = init.frame;
  s.log_norm_initial = init.frame.col(0).norm() > 0 ? std::log(init.frame.col(0).norm()) : kNegInf;
  if (options_.mode == DerivativeMode::LogRadial) {
    s.log_scale.assign(static_cast<std::size_t>(s.frame.cols()), 0.0);
    for (int j = 0; j < s.frame.cols(); ++j) {
      const double n = s.frame.col(j).norm();
      if (n == 0.0) {
        s.log_scale[static_cast<std::size_t>(j)] = kNegInf;
      } else {
        s.frame.col(j) /= n;
        s.log_scale[static_cast<std::size_t>(j)] = std::log(n);
      }
    }
  }
}

void FlowEngine::step_member(MemberState& s, const Vector& db, double h, Workspace& w) const {
  const VectorFieldSystem& sys = system_;
  const ManifoldModel& model = sys.model();
  const bool embedded = model.kind() == ManifoldModel::Kind::Embedded;

  sys.diffusion(s.x, w.x0m);
  sys.drift(s.x, w.a0);
  w.xp.noalias() = w.x0m * db;
  w.xp += s.x + h * w.a0;
  sys.diffusion(w.xp, w.x1m);
  sys.drift(w.xp, w.a1);
  w.xn.noalias() = 0.5 * (w.x0m * db);
  w.xdb.noalias() = 0.5 * (w.x1m * db);
  w.xn += w.xdb;
  w.xn += s.x + (0.5 * h) * (w.a0 + w.a1);

  bool bad = !w.xn.allFinite() || w.xn.norm() > options_.explosion_radius;
  if (!bad && embedded) {
    try {
      w.xn = model.retract(w.xn);
    } catch (const DomainError&) {
      bad = true;
    }
    bad = bad || !w.xn.allFinite();
  }
  if (bad) {
    s.exploded = true;
    return;
  }
  if (model.excluded_point() && (w.xn - *model.excluded_point()).norm() <= model.exclusion_radius()) {
    s.domain_exit = true;
    return;
  }

  const int k = static_cast<int>(s.frame.cols());
  if (k > 0) {
    const bool log_radial = options_.mode == DerivativeMode::LogRadial;
    w.next_frame.resize(s.frame.rows(), k);
    for (int j = 0; j < k; ++j) {
      if (log_radial && s.log_scale[static_cast<std::size_t>(j)] == kNegInf) {
        w.next_frame.col(j).setZero();
        continue;
      }
      const auto u = s.frame.col(j);
      sys.diffusion_jacobian(s.x, u, w.j0);
      sys.drift_jacobian(s.x, u, w.d0);
      if (j == 0 && log_radial && options_.track_martingale) {
        double dm = 0.0, dq = 0.0;
        for (int i = 0; i < w.j0.cols(); ++i) {
          const double g = w.j0.col(i).dot(u);
          dm += g * db[i];
          dq += g * g;
        }
        s.martingale += dm;
        s.bracket += dq * h;
      }
      w.up.noalias() = w.j0 * db;
      w.up += u + h * w.d0;
      sys.diffusion_jacobian(w.xp, w.up, w.j1);
      sys.drift_jacobian(w.xp, w.up, w.d1);
      w.un.noalias() = 0.5 * (w.j0 * db);
      w.xdb.noalias() = 0.5 * (w.j1 * db);
      w.un += w.xdb;
      w.un += u + (0.5 * h) * (w.d0 + w.d1);
      w.next_frame.col(j) = w.un;
    }
    if (embedded) w.next_frame = model.projection(w.xn) * w.next_frame;
    if (!w.next_frame.allFinite()) {
      s.exploded = true;
      return;
    }
    if (log_radial) {
      for (int j = 0; j < k; ++j) {
        auto& l = s.log_scale[static_cast<std::size_t>(j)];
        if (l == kNegInf) continue;
        const double n = w.next_frame.col(j).norm();
        if (n == 0.0) {
          l = kNegInf;
          w.next_frame.col(j).setZero();
        } else {
          w.next_frame.col(j) /= n;
          l += std::log(n);
        }
      }
    } else {
      for (int j = 0; j < k; ++j) {
        const double n = w.next_frame.col(j).norm();
        if (n > 0.0 && n < 1e-300) s.underflow = true;
      }
    }
    s.frame.swap(w.next_frame);
  }
  s.x.swap(w.xn);
  w.xn.resize(s.x.size());
}

std::vector<MemberState> FlowEngine::run(const std::vector<MemberInit>& members, const TimeGrid& grid,
                                         const BrownianDriver& driver, int aggregation,
                                         const FlowObserver& observer) const {
  if (driver.dim() != system_.noise_dim()) throw ContractError("driver dimension != noise dimension");
  std::vector<MemberState> states(members.size());
  for (std::size_t i = 0; i < members.size(); ++i) {
    check_initial(members[i]);
    initialise(states[i], members[i]);
  }
  const int n = system_.dim();
  const int m = system_.noise_dim();
  Workspace w;
  w.x0m.resize(n, m);
  w.x1m.resize(n, m);
  w.j0.resize(n, m);
  w.j1.resize(n, m);
  for (Vector* v : {&w.a0, &w.a1, &w.xp, &w.xn, &w.d0, &w.d1, &w.up, &w.un, &w.xdb}) v->resize(n);
  Vector db(m);

  if (observer && !observer(0, 0.0, states)) return states;
  for (long k = 0; k < grid.steps; ++k) {
    driver.increment(static_cast<std::uint64_t>(k), aggregation, db);
    bool any_alive = false;
    for (auto& s : states) {
      if (!s.alive()) continue;
      step_member(s, db, grid.dt, w);
      if (!s.alive()) s.stop_step = k + 1;
      any_alive = any_alive || s.alive();
    }
    if (observer && !observer(k + 1, grid.time(k + 1), states)) break;
    if (!any_alive) break;
  }
  return states;
}

// ---------------------------------------------------------------------------
// Single trajectories

namespace {

Trajectory record(const FlowEngine& engine, const MemberInit& init, const TimeGrid& grid,
                  const BrownianDriver& driver) {
  Trajectory tr;
  const bool tangent = init.frame.size() > 0 && engine.options().mode != DerivativeMode::None;
  auto states = engine.run({init}, grid, driver, aggregation_factor(grid, driver),
                           [&](long, double t, const std::vector<MemberState>& s) {
                             if (!s[0].alive()) return false;
                             tr.times.push_back(t);
                             tr.states.push_back(s[0].x);
                             if (tangent) tr.tangents.push_back(s[0].vector(0));
                             return true;
                           });
  tr.exploded = states[0].exploded;
  tr.domain_exit = states[0].domain_exit;
  tr.stop_step = states[0].stop_step;
  if (tr.exploded) tr.explosion_time = grid.time(tr.stop_step);
  return tr;
}

}  // namespace

Trajectory integrate_flow(const VectorFieldSystem& system, const Vector& x0, const TimeGrid& grid,
                          const BrownianDriver& driver, const FlowOptions& options) {
  FlowOptions o = options;
  o.mode = DerivativeMode::None;
  FlowEngine engine(system, o);
  return record(engine, MemberInit{x0, {}}, grid, driver);
}

Trajectory integrate_derivative_flow(const VectorFieldSystem& system, const Vector& x0,
                                     const Vector& v0, const TimeGrid& grid,
                                     const BrownianDriver& driver, DerivativeMode mode,
                                     const FlowOptions& options) {
  if (mode == DerivativeMode::None) throw ContractError("derivative flow needs direct or log_radial mode");
  FlowOptions o = options;
  o.mode = mode;
  FlowEngine engine(system, o);
  Matrix frame = v0;
  return record(engine, MemberInit{x0, frame}, grid, driver);
}

// ---------------------------------------------------------------------------
// Stopping

StopRule StopRule::exit_radius(double r, Vector center) {
  if (!(r > 0.0)) throw ContractError("exit radius must be positive");
  StopRule s;
  s.kind = Kind::ExitRadius;
  s.radius = r;
  s.center = std::move(center);
  return s;
}

StopRule StopRule::exit_set(std::function<bool(const Vector&)> inside) {
  if (!inside) throw ContractError("exit set needs an indicator");
  StopRule s;
  s.kind = Kind::ExitSet;
  s.inside = std::move(inside);
  return s;
}

StopRule StopRule::at_horizon(double t) {
  StopRule s;
  s.kind = Kind::Horizon;
  s.horizon = t;
  return s;
}

bool StopRule::fires(const Vector& x, double t) const {
  switch (kind) {
    case Kind::ExitRadius: return (x - center).norm() >= radius;
    case Kind::ExitSet: return !inside(x);
    case Kind::Horizon: return t >= horizon - 1e-12 * std::max(1.0, horizon);
  }
  return false;
}

StopTracker::StopTracker(std::vector<StopRule> rules, std::size_t members)
    : rules_(std::move(rules)), first_(rules_.size(), std::vector<long>(members, -1)) {}

void StopTracker::observe(long step, double t, const std::vector<MemberState>& states) {
  for (std::size_t r = 0; r < rules_.size(); ++r) {
    for (std::size_t i = 0; i < states.size(); ++i) {
      if (first_[r][i] >= 0) continue;
      if (!states[i].alive()) first_[r][i] = states[i].stop_step;
      else if (rules_[r].fires(states[i].x, t)) first_[r][i] = step;
    }
  }
}

long StopTracker::min_step(std::size_t rule) const {
  long best = -1;
  for (long s : first_[rule])
    if (s >= 0 && (best < 0 || s < best)) best = s;
  return best;
}

bool StopTracker::all_fired() const {
  for (const auto& r : first_)
    for (long s : r)
      if (s < 0) return false;
  return true;
}

std::vector<long> exit_steps(const FlowEngine& engine, const std::vector<Vector>& points,
                             const StopRule& rule, const TimeGrid& grid,
                             const BrownianDriver& driver) {
  std::vector<MemberInit> members;
  for (const auto& p : points) members.push_back({p, {}});
  StopTracker tracker({rule}, points.size());
  engine.run(members, grid, driver, aggregation_factor(grid, driver),
             [&](long step, double t, const std::vector<MemberState>& s) {
               tracker.observe(step, t, s);
               return !tracker.all_fired();
             });
  std::vector<long> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const long s = tracker.step(0, i);
    out[i] = s < 0 ? grid.steps : s;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Curves

CurveSample CurveSample::segment(const Vector& a, const Vector& b, int nodes) {
  if (nodes < 2) throw ContractError("a curve needs at least two nodes");
  CurveSample c;
  for (int k = 0; k < nodes; ++k) {
    const double s = static_cast<double>(k) / (nodes - 1);
    c.s.push_back(s);
    c.points.push_back(a + s * (b - a));
    c.tangents.push_back(b - a);
  }
  return c;
}

double CurveSample::length() const {
  double l = 0.0;
  for (std::size_t k = 0; k + 1 < s.size(); ++k)
    l += 0.5 * (s[k + 1] - s[k]) * (tangents[k].norm() + tangents[k + 1].norm());
  return l;
}

CurveTransport transport_curve(const VectorFieldSystem& system, const CurveSample& curve,
                               const TimeGrid& grid, const BrownianDriver& driver,
                               const FlowOptions& options) {
  if (curve.points.size() != curve.tangents.size() || curve.points.size() != curve.s.size())
    throw ContractError("curve nodes, tangents and parameters must have equal length");
  FlowOptions o = options;
  if (o.mode == DerivativeMode::None) o.mode = DerivativeMode::LogRadial;
  FlowEngine engine(system, o);
  std::vector<MemberInit> members;
  for (std::size_t k = 0; k < curve.points.size(); ++k) members.push_back({curve.points[k], Matrix(curve.tangents[k])});
  CurveTransport out;
  const auto& excluded = system.model().excluded_point();
  auto states = engine.run(members, grid, driver, aggregation_factor(grid, driver),
                           [&](long, double, const std::vector<MemberState>& s) {
                             if (excluded)
                               for (const auto& m : s)
                                 if (m.alive())
                                   out.min_distance_to_excluded =
                                       std::min(out.min_distance_to_excluded, (m.x - *excluded).norm());
                             return true;
                           });
  std::vector<double> speed(states.size());
  for (std::size_t k = 0; k < states.size(); ++k) {
    out.points.push_back(states[k].x);
    out.tangents.push_back(states[k].vector(0));
    if (!states[k].alive() && !out.first_explosion_node) out.first_explosion_node = k;
    speed[k] = std::exp(states[k].log_norm(0));
  }
  if (out.first_explosion_node) {
    out.length = std::numeric_limits<double>::infinity();
    return out;
  }
  for (std::size_t k = 0; k + 1 < states.size(); ++k)
    out.length += 0.5 * (curve.s[k + 1] - curve.s[k]) * (speed[k] + speed[k + 1]);
  return out;
}

void write_trajectory_csv(std::ostream& os, const std::vector<Trajectory>& paths, int dim,
                          bool with_tangent) {
  os << "path_id,step,time";
  for (int i = 1; i <= dim; ++i) os << ",x" << i;
  if (with_tangent)
    for (int i = 1; i <= dim; ++i) os << ",v" << i;
  os << ",exploded\r\n";
  for (std::size_t p = 0; p < paths.size(); ++p) {
    const Trajectory& tr = paths[p];
    for (std::size_t k = 0; k < tr.states.size(); ++k) {
      os << p << ',' << k << ',';
      put_double(os, tr.times[k]);
      for (int i = 0; i < dim; ++i) {
        os << ',';
        put_double(os, tr.states[k][i]);
      }
      if (with_tangent) {
        for (int i = 0; i < dim; ++i) {
          os << ',';
          if (k < tr.tangents.size()) put_double(os, tr.tangents[k][i]);
        }
      }
      const bool last = k + 1 == tr.states.size();
      os << ',' << ((last && (tr.exploded || tr.domain_exit)) ? 1 : 0) << "\r\n";
    }
  }
}

}  // namespace flowlab
