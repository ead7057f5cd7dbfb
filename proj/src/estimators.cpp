#include "flowlab/estimators.hpp"

#include "flowlab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace flowlab {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLogOverflow = 700.0;

FlowEngine derivative_engine(const VectorFieldSystem& system, const McConfig& cfg) {
  FlowOptions o = cfg.flow;
  if (o.mode == DerivativeMode::None) o.mode = DerivativeMode::LogRadial;
  return FlowEngine(system, o);
}

FlowEngine point_engine(const VectorFieldSystem& system, const McConfig& cfg) {
  FlowOptions o = cfg.flow;
  o.mode = DerivativeMode::None;
  o.track_martingale = false;
  return FlowEngine(system, o);
}

std::vector<MemberInit> frame_members(const ManifoldModel& model, const std::vector<Vector>& grid) {
  if (grid.empty()) throw ContractError("empty grid");
  std::vector<MemberInit> out;
  for (const auto& x : grid) out.push_back({x, tangent_basis(model, x)});
  return out;
}

std::vector<MemberInit> point_members(const std::vector<Vector>& points) {
  std::vector<MemberInit> out;
  for (const auto& x : points) out.push_back({x, Matrix()});
  return out;
}

// log of the metric rescaling between T_{x0}M and T_xM (non-zero only for rescaled models)
double metric_shift(const ManifoldModel& model, const Vector& x0, const Vector& x) {
  if (model.kind() != ManifoldModel::Kind::RescaledFlat) return 0.0;
  return std::log(model.weight(x)) - std::log(model.weight(x0));
}

long horizon_step(double h, double dt) {
  const double s = h / dt;
  const long k = std::lround(s);
  if (k < 0 || std::abs(s - static_cast<double>(k)) > 1e-9 * std::max(1.0, s))
    throw ContractError("horizon is not a multiple of dt");
  return k;
}

}  // namespace

BrownianDriver McConfig::driver(const VectorFieldSystem& system, long path) const {
  const double fine = fine_dt > 0.0 ? fine_dt : dt;
  return BrownianDriver(seed, stream_offset + static_cast<std::uint32_t>(path), system.noise_dim(), fine);
}

MomentEstimate summarize(const std::vector<double>& samples, std::uint64_t seed) {
  MomentEstimate e;
  e.seed = seed;
  e.n = static_cast<long>(samples.size());
  if (samples.empty()) {
    e.valid = false;
    return e;
  }
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(e.n);
  double ss = 0.0;
  for (double s : samples) ss += (s - mean) * (s - mean);
  const double var = e.n > 1 ? ss / static_cast<double>(e.n - 1) : 0.0;
  e.value = mean;
  e.std_error = std::sqrt(var / static_cast<double>(e.n));
  e.ci_low = mean - kNormalQuantile95 * e.std_error;
  e.ci_high = mean + kNormalQuantile95 * e.std_error;
  e.valid = std::isfinite(mean);
  return e;
}

MomentEstimate summarize_exp(const std::vector<double>& log_samples, std::uint64_t seed) {
  MomentEstimate e;
  e.seed = seed;
  e.n = static_cast<long>(log_samples.size());
  if (log_samples.empty()) {
    e.valid = false;
    return e;
  }
  double lmax = kNegInf;
  for (double l : log_samples) lmax = std::max(lmax, l);
  if (lmax == kNegInf) {
    e.value = e.std_error = e.ci_low = e.ci_high = 0.0;
    return e;
  }
  if (!std::isfinite(lmax)) {
    e.valid = false;
    e.value = lmax;
    return e;
  }
  std::vector<double> w;
  w.reserve(log_samples.size());
  for (double l : log_samples) w.push_back(std::exp(l - lmax));
  const MomentEstimate s = summarize(w, seed);
  if (lmax + std::log(s.value) > kLogOverflow) {
    e.log_space = true;
    e.value = lmax + std::log(s.value);
    e.std_error = s.std_error / s.value;
    e.ci_low = e.value - kNormalQuantile95 * e.std_error;
    e.ci_high = e.value + kNormalQuantile95 * e.std_error;
    return e;
  }
  const double scale = std::exp(lmax);
  e.value = scale * s.value;
  e.std_error = scale * s.std_error;
  e.ci_low = e.value - kNormalQuantile95 * e.std_error;
  e.ci_high = e.value + kNormalQuantile95 * e.std_error;
  return e;
}

GridEstimate grid_supremum(std::vector<MomentEstimate> per_point) {
  GridEstimate g;
  g.per_point = std::move(per_point);
  if (g.per_point.empty()) {
    g.sup.valid = false;
    return g;
  }
  auto key = [](const MomentEstimate& e) {
    if (!e.valid) return kNegInf;
    return e.log_space ? e.value : (e.value > 0 ? std::log(e.value) : kNegInf);
  };
  for (std::size_t i = 1; i < g.per_point.size(); ++i)
    if (key(g.per_point[i]) > key(g.per_point[g.argmax])) g.argmax = i;
  g.sup = g.per_point[g.argmax];
  for (const auto& e : g.per_point) {
    g.sup.truncated = std::max(g.sup.truncated, e.truncated);
    g.sup.lower_bound_only = g.sup.lower_bound_only || e.lower_bound_only;
  }
  return g;
}

// ---------------------------------------------------------------------------

GridEstimate estimate_sup_derivative_moment(const VectorFieldSystem& system, const std::vector<Vector>& grid,
                                            double p, double t, const McConfig& cfg, bool terminal) {
  if (!(p > 0.0)) throw ContractError("p must be positive");
  const FlowEngine engine = derivative_engine(system, cfg);
  const TimeGrid tg = TimeGrid::uniform(t, cfg.dt);
  const ManifoldModel& model = engine.system().model();
  const auto members = frame_members(model, grid);
  const std::size_t k = grid.size();

  struct PathResult {
    std::vector<double> log_norm;
    std::vector<char> truncated;
  };
  auto paths = parallel_map<PathResult>(static_cast<std::size_t>(cfg.paths), cfg.workers, [&](std::size_t i) {
    const BrownianDriver drv = cfg.driver(system, static_cast<long>(i));
    PathResult r{std::vector<double>(k, kNegInf), std::vector<char>(k, 0)};
    const auto states = engine.run(members, tg, drv, aggregation_factor(tg, drv),
                                   [&](long, double, const std::vector<MemberState>& s) {
                                     if (terminal) return true;
                                     for (std::size_t j = 0; j < k; ++j)
                                       if (s[j].alive())
                                         r.log_norm[j] = std::max(r.log_norm[j], s[j].log_operator_norm() +
                                                                                     metric_shift(model, grid[j], s[j].x));
                                     return true;
                                   });
    for (std::size_t j = 0; j < k; ++j) {
      r.truncated[j] = states[j].alive() ? 0 : 1;
      if (terminal)
        r.log_norm[j] =
            states[j].alive() ? states[j].log_operator_norm() + metric_shift(model, grid[j], states[j].x) : kNegInf;
    }
    return r;
  });

  std::vector<MomentEstimate> per_point;
  for (std::size_t j = 0; j < k; ++j) {
    std::vector<double> logs;
    long trunc = 0;
    for (const auto& r : paths) {
      if (r.truncated[j]) {
        ++trunc;
        if (terminal) continue;
      }
      logs.push_back(p * r.log_norm[j]);
    }
    MomentEstimate e = summarize_exp(logs, cfg.seed);
    e.truncated = trunc;
    e.lower_bound_only = trunc > 0 && !terminal;
    if (trunc == cfg.paths) e.valid = false;
    per_point.push_back(e);
  }
  return grid_supremum(std::move(per_point));
}

StoppedMomentResult estimate_stopped_moment(const VectorFieldSystem& system, const std::vector<Vector>& grid,
                                            const std::vector<double>& radii, double t, const McConfig& cfg,
                                            const std::optional<Vector>& center) {
  if (radii.empty()) throw ContractError("radius ladder is empty");
  for (std::size_t j = 1; j < radii.size(); ++j)
    if (!(radii[j] > radii[j - 1])) throw ContractError("radii must be increasing");
  const FlowEngine engine = derivative_engine(system, cfg);
  const TimeGrid tg = TimeGrid::uniform(t, cfg.dt);
  const ManifoldModel& model = engine.system().model();
  const auto members = frame_members(model, grid);
  const Vector c = center ? *center : Vector(Vector::Zero(system.dim()));
  const std::size_t k = grid.size();
  const std::size_t nr = radii.size();

  struct PathResult {
    std::vector<char> fired;          // per rung
    std::vector<double> log_norm;     // rung-major, per member
  };
  auto paths = parallel_map<PathResult>(static_cast<std::size_t>(cfg.paths), cfg.workers, [&](std::size_t i) {
    const BrownianDriver drv = cfg.driver(system, static_cast<long>(i));
    PathResult r{std::vector<char>(nr, 0), std::vector<double>(nr * k, kNegInf)};
    std::size_t next = 0;  // radii are nested, so rungs fire in order
    engine.run(members, tg, drv, aggregation_factor(tg, drv),
               [&](long step, double, const std::vector<MemberState>& s) {
                 if (step == tg.steps) return false;  // S = t does not count as S < t
                 double worst = 0.0;
                 for (const auto& m : s)
                   worst = std::max(worst, m.alive() ? (m.x - c).norm() : std::numeric_limits<double>::infinity());
                 while (next < nr && worst >= radii[next]) {
                   r.fired[next] = 1;
                   for (std::size_t j = 0; j < k; ++j)
                     r.log_norm[next * k + j] = s[j].log_operator_norm() + metric_shift(model, grid[j], s[j].x);
                   ++next;
                 }
                 return next < nr;
               });
    return r;
  });

  StoppedMomentResult out;
  out.radii = radii;
  for (std::size_t q = 0; q < nr; ++q) {
    std::vector<MomentEstimate> per_point;
    for (std::size_t j = 0; j < k; ++j) {
      std::vector<double> v;
      v.reserve(paths.size());
      for (const auto& r : paths) v.push_back(r.fired[q] ? std::exp(r.log_norm[q * k + j]) : 0.0);
      per_point.push_back(summarize(v, cfg.seed));
    }
    out.rungs.push_back(grid_supremum(std::move(per_point)));
    long fired = 0;
    for (const auto& r : paths) fired += r.fired[q];
    out.exit_fraction.push_back(static_cast<double>(fired) / static_cast<double>(paths.size()));
  }
  out.liminf_proxy = std::numeric_limits<double>::infinity();
  for (std::size_t q = nr >= 3 ? nr - 3 : 0; q < nr; ++q) out.liminf_proxy = std::min(out.liminf_proxy, out.rungs[q].sup.value);
  return out;
}

ExpFunctionalResult estimate_exponential_functional(const VectorFieldSystem& system,
                                                    const std::function<double(const Vector&)>& f,
                                                    const Vector& x, double t, double theta, const McConfig& cfg) {
  if (!(theta >= 0.0)) throw ContractError("theta must be nonnegative");
  if (!(t > 0.0)) throw ContractError("t must be positive");
  const FlowEngine engine = point_engine(system, cfg);
  const TimeGrid tg = TimeGrid::uniform(t, cfg.dt);
  const auto members = point_members({x});

  struct PathResult {
    double log_value = 0.0;
    double log_jensen = kNegInf;
    bool truncated = false;
  };
  auto paths = parallel_map<PathResult>(static_cast<std::size_t>(cfg.paths), cfg.workers, [&](std::size_t i) {
    const BrownianDriver drv = cfg.driver(system, static_cast<long>(i));
    double integral = 0.0;
    double lmax = kNegInf, acc = 0.0;  // running log-sum-exp of theta t f(x_s)
    const auto states = engine.run(members, tg, drv, aggregation_factor(tg, drv),
                                   [&](long step, double, const std::vector<MemberState>& s) {
                                     if (step >= tg.steps || !s[0].alive()) return true;
                                     const double fx = f(s[0].x);
                                     integral += fx * tg.dt;
                                     const double l = theta * t * fx;
                                     if (l > lmax) {
                                       acc = acc * std::exp(lmax - l) + 1.0;
                                       lmax = l;
                                     } else {
                                       acc += std::exp(l - lmax);
                                     }
                                     return true;
                                   });
    PathResult r;
    r.truncated = !states[0].alive();
    r.log_value = theta * integral;
    r.log_jensen = lmax + std::log(acc) + std::log(tg.dt / t);
    return r;
  });

  std::vector<double> lv, lj;
  long trunc = 0;
  for (const auto& r : paths) {
    if (r.truncated) {
      ++trunc;
      continue;
    }
    lv.push_back(r.log_value);
    lj.push_back(r.log_jensen);
  }
  ExpFunctionalResult out;
  out.estimate = summarize_exp(lv, cfg.seed);
  out.jensen = summarize_exp(lj, cfg.seed);
  for (auto* e : {&out.estimate, &out.jensen}) {
    e->truncated = trunc;
    e->lower_bound_only = trunc > 0;
  }
  return out;
}

double radial_distance(const ManifoldModel& model, const CurvatureData& data, const Vector& x) {
  if (!data.pole) throw ContractError("radial quantities need a pole");
  if ((x - *data.pole).norm() == 0.0) return 0.0;
  try {
    return pole_distance(model, data, x).r;
  } catch (const SingularPointError&) {
    if (model.is_flat_metric()) return (x - *data.pole).norm();
    throw;
  }
}

RadialMomentResult estimate_radial_moment(const VectorFieldSystem& system, const CurvatureData& data,
                                          const Vector& x0, double p, double t, const McConfig& cfg,
                                          const std::vector<double>& levels, std::optional<double> k0) {
  if (!(p > 0.0)) throw ContractError("p must be positive");
  const ManifoldModel& model = system.model();
  const double r0 = radial_distance(model, data, x0);
  std::vector<double> ladder = levels;
  if (ladder.empty())
    for (int j = 1; j <= 4; ++j) ladder.push_back((1.0 + r0) * std::ldexp(1.0, j));
  std::sort(ladder.begin(), ladder.end());
  const FlowEngine engine = point_engine(system, cfg);
  const TimeGrid tg = TimeGrid::uniform(t, cfg.dt);
  const auto members = point_members({x0});
  const std::size_t nl = ladder.size();

  struct PathResult {
    double r_final = 0.0;
    bool truncated = false;
    std::vector<char> hit;
  };
  auto paths = parallel_map<PathResult>(static_cast<std::size_t>(cfg.paths), cfg.workers, [&](std::size_t i) {
    const BrownianDriver drv = cfg.driver(system, static_cast<long>(i));
    PathResult r;
    r.hit.assign(nl, 0);
    double rmax = 0.0;
    const auto states = engine.run(members, tg, drv, aggregation_factor(tg, drv),
                                   [&](long step, double, const std::vector<MemberState>& s) {
                                     if (!s[0].alive()) return false;
                                     const double d = radial_distance(model, data, s[0].x);
                                     if (step < tg.steps) rmax = std::max(rmax, d);
                                     r.r_final = d;
                                     return true;
                                   });
    r.truncated = !states[0].alive();
    for (std::size_t j = 0; j < nl; ++j) r.hit[j] = r.truncated || rmax >= ladder[j];
    return r;
  });

  RadialMomentResult out;
  out.levels = ladder;
  std::vector<double> m;
  long trunc = 0;
  for (const auto& r : paths) {
    if (r.truncated) {
      ++trunc;
      continue;
    }
    m.push_back(std::pow(1.0 + r.r_final, p));
  }
  out.moment = summarize(m, cfg.seed);
  out.moment.truncated = trunc;
  out.moment.lower_bound_only = trunc > 0;
  for (std::size_t j = 0; j < nl; ++j) {
    std::vector<double> h;
    for (const auto& r : paths) h.push_back(r.hit[j] ? 1.0 : 0.0);
    out.exit_probability.push_back(summarize(h, cfg.seed));
  }
  if (k0) {
    out.bound = std::pow(1.0 + r0, p) * std::exp(*k0 * (1.0 + p * p) * t);
    out.within_bound = out.moment.value <= *out.bound + 3.0 * out.moment.std_error;
  }
  return out;
}

std::vector<ExponentFit> estimate_moment_exponent(const VectorFieldSystem& system, const std::vector<Vector>& grid,
                                                  const std::vector<double>& ps, const std::vector<double>& horizons,
                                                  const McConfig& cfg) {
  if (horizons.size() < 2) throw ContractError("need at least two horizons");
  for (std::size_t j = 1; j < horizons.size(); ++j)
    if (!(horizons[j] > horizons[j - 1])) throw ContractError("horizons must be increasing");
  for (double p : ps)
    if (!(p > 0.0)) throw ContractError("p must be positive");
  const FlowEngine engine = derivative_engine(system, cfg);
  const TimeGrid tg = TimeGrid::uniform(horizons.back(), cfg.dt);
  std::vector<long> marks;
  for (double h : horizons) marks.push_back(horizon_step(h, cfg.dt));
  const ManifoldModel& model = engine.system().model();
  const auto members = frame_members(model, grid);
  const std::size_t k = grid.size();
  const std::size_t nh = horizons.size();

  // log |T_xF_t| per (horizon, member); NaN marks a truncated member
  auto paths = parallel_map<std::vector<double>>(static_cast<std::size_t>(cfg.paths), cfg.workers, [&](std::size_t i) {
    const BrownianDriver drv = cfg.driver(system, static_cast<long>(i));
    std::vector<double> r(nh * k, std::numeric_limits<double>::quiet_NaN());
    std::size_t next = 0;
    engine.run(members, tg, drv, aggregation_factor(tg, drv), [&](long step, double, const std::vector<MemberState>& s) {
      while (next < nh && marks[next] == step) {
        for (std::size_t j = 0; j < k; ++j)
          if (s[j].alive()) r[next * k + j] = s[j].log_operator_norm() + metric_shift(model, grid[j], s[j].x);
        ++next;
      }
      return next < nh;
    });
    return r;
  });

  std::vector<ExponentFit> fits;
  for (double p : ps) {
    ExponentFit fit;
    fit.p = p;
    fit.horizons = horizons;
    std::vector<double> xs, ys;
    for (std::size_t h = 0; h < nh; ++h) {
      std::vector<MomentEstimate> per_point;
      for (std::size_t j = 0; j < k; ++j) {
        std::vector<double> logs;
        long trunc = 0;
        for (const auto& r : paths) {
          const double l = r[h * k + j];
          if (std::isnan(l)) ++trunc;
          else logs.push_back(p * l);
        }
        MomentEstimate e = summarize_exp(logs, cfg.seed);
        e.truncated = trunc;
        per_point.push_back(e);
      }
      const GridEstimate g = grid_supremum(std::move(per_point));
      double lm = std::numeric_limits<double>::quiet_NaN();
      if (g.sup.valid && (g.sup.log_space || g.sup.value > 0.0)) lm = g.sup.log_space ? g.sup.value : std::log(g.sup.value);
      fit.log_moments.push_back(lm);
      if (std::isfinite(lm)) {
        xs.push_back(horizons[h]);
        ys.push_back(lm);
      } else {
        fit.excluded.push_back(h);
      }
    }
    if (xs.size() >= 2) {
      const double n = static_cast<double>(xs.size());
      const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
      const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
      double sxy = 0.0, sxx = 0.0;
      for (std::size_t j = 0; j < xs.size(); ++j) {
        sxy += (xs[j] - mx) * (ys[j] - my);
        sxx += (xs[j] - mx) * (xs[j] - mx);
      }
      fit.slope = sxy / sxx;
      fit.intercept = my - fit.slope * mx;
    } else {
      fit.slope = fit.intercept = std::numeric_limits<double>::quiet_NaN();
    }
    for (std::size_t h = 0; h < nh; ++h)
      fit.residuals.push_back(fit.log_moments[h] - (fit.intercept + fit.slope * horizons[h]));
    fits.push_back(std::move(fit));
  }
  return fits;
}

double sup_h1(const VectorFieldSystem& system, const CurvatureData* curvature, const Vector& x, HpBackend backend) {
  double best = kNegInf;
  for (const auto& v : tangent_directions(system.model(), x)) best = std::max(best, eval_Hp(system, curvature, x, v, 1.0, backend));
  return best;
}

GridEstimate estimate_girsanov_one_completeness(const VectorFieldSystem& system, const std::vector<Vector>& grid,
                                                double horizon, const McConfig& cfg,
                                                const CurvatureData* curvature, std::optional<HpBackend> backend) {
  if (!system.gradient_system()) throw ContractError("needs a gradient Brownian system");
  const auto b = backend ? backend : preferred_backend(system);
  if (!b) throw CapabilityError("no H_p backend for this system");
  const FlowEngine engine = point_engine(system, cfg);
  const TimeGrid tg = TimeGrid::uniform(horizon, cfg.dt);
  const auto members = point_members(grid);
  const std::size_t k = grid.size();

  struct PathResult {
    std::vector<double> integral;
    std::vector<char> truncated;
  };
  auto paths = parallel_map<PathResult>(static_cast<std::size_t>(cfg.paths), cfg.workers, [&](std::size_t i) {
    const BrownianDriver drv = cfg.driver(system, static_cast<long>(i));
    PathResult r{std::vector<double>(k, 0.0), std::vector<char>(k, 0)};
    const auto states = engine.run(members, tg, drv, aggregation_factor(tg, drv),
                                   [&](long step, double, const std::vector<MemberState>& s) {
                                     if (step >= tg.steps) return true;
                                     for (std::size_t j = 0; j < k; ++j)
                                       if (s[j].alive()) r.integral[j] += sup_h1(engine.system(), curvature, s[j].x, *b) * tg.dt;
                                     return true;
                                   });
    for (std::size_t j = 0; j < k; ++j) r.truncated[j] = !states[j].alive();
    return r;
  });

  std::vector<MomentEstimate> per_point;
  for (std::size_t j = 0; j < k; ++j) {
    std::vector<double> logs;
    long trunc = 0;
    for (const auto& r : paths) {
      if (r.truncated[j]) {
        ++trunc;
        continue;
      }
      logs.push_back(0.5 * r.integral[j]);
    }
    MomentEstimate e = summarize_exp(logs, cfg.seed);
    e.truncated = trunc;
    e.lower_bound_only = trunc > 0;
    per_point.push_back(e);
  }
  return grid_supremum(std::move(per_point));
}

}  // namespace flowlab
