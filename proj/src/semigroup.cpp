#include "flowlab/semigroup.hpp"

#include "flowlab/parallel.hpp"

#include <cmath>

namespace flowlab {

double ScalarObservable::differential(const Vector& x, const Vector& v) const {
  if (df) return df(x, v);
  Vector g(x.size());
  Vector y = x;
  for (int j = 0; j < x.size(); ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(x[j]));
    y[j] = x[j] + h;
    const double fp = f(y);
    y[j] = x[j] - h;
    const double fm = f(y);
    y[j] = x[j];
    g[j] = (fp - fm) / (2.0 * h);
  }
  return g.dot(v);
}

ScalarObservable observable_identity(int coordinate) {
  ScalarObservable o;
  o.f = [coordinate](const Vector& x) { return x[coordinate]; };
  o.df = [coordinate](const Vector&, const Vector& v) { return v[coordinate]; };
  o.sup_df = 1.0;
  return o;
}

ScalarObservable observable_square() {
  ScalarObservable o;
  o.f = [](const Vector& x) { return x.squaredNorm(); };
  o.df = [](const Vector& x, const Vector& v) { return 2.0 * x.dot(v); };
  return o;
}

ScalarObservable observable_sin(int coordinate) {
  ScalarObservable o;
  o.f = [coordinate](const Vector& x) { return std::sin(x[coordinate]); };
  o.df = [coordinate](const Vector& x, const Vector& v) { return std::cos(x[coordinate]) * v[coordinate]; };
  o.sup_f = 1.0;
  o.sup_df = 1.0;
  return o;
}

ScalarObservable observable_constant(double c) {
  ScalarObservable o;
  o.f = [c](const Vector&) { return c; };
  o.df = [](const Vector&, const Vector&) { return 0.0; };
  o.sup_f = std::abs(c);
  o.sup_df = 0.0;
  return o;
}

namespace {

FlowEngine engine_with(const VectorFieldSystem& system, const McConfig& cfg, DerivativeMode mode) {
  FlowOptions o = cfg.flow;
  o.mode = mode;
  o.track_martingale = false;
  return FlowEngine(system, o);
}

Matrix column(const Vector& v) {
  Matrix m(v.size(), 1);
  m.col(0) = v;
  return m;
}

}  // namespace

MomentEstimate estimate_Ptf(const VectorFieldSystem& system, const ScalarObservable& obs, const Vector& x, double t,
                            const McConfig& cfg) {
  const FlowEngine engine = engine_with(system, cfg, DerivativeMode::None);
  const TimeGrid tg = TimeGrid::uniform(t, cfg.dt);
  const std::vector<MemberInit> members = {{x, Matrix()}};
  struct R {
    double value = 0.0;
    bool truncated = false;
  };
  auto paths = parallel_map<R>(static_cast<std::size_t>(cfg.paths), cfg.workers, [&](std::size_t i) {
    const BrownianDriver drv = cfg.driver(system, static_cast<long>(i));
    const auto s = engine.run(members, tg, drv, aggregation_factor(tg, drv));
    return s[0].alive() ? R{obs.f(s[0].x), false} : R{0.0, true};
  });
  std::vector<double> v;
  long trunc = 0;
  for (const auto& r : paths) {
    v.push_back(r.value);
    trunc += r.truncated;
  }
  MomentEstimate e = summarize(v, cfg.seed);
  e.truncated = trunc;
  return e;
}

MomentEstimate estimate_deltaPt(const VectorFieldSystem& system, const OneForm& phi, const Vector& x, const Vector& v,
                                double t, const McConfig& cfg) {
  const FlowEngine engine = engine_with(system, cfg, DerivativeMode::Direct);
  const TimeGrid tg = TimeGrid::uniform(t, cfg.dt);
  const std::vector<MemberInit> members = {{x, column(v)}};
  struct R {
    double value = 0.0;
    bool truncated = false;
  };
  auto paths = parallel_map<R>(static_cast<std::size_t>(cfg.paths), cfg.workers, [&](std::size_t i) {
    const BrownianDriver drv = cfg.driver(system, static_cast<long>(i));
    const auto s = engine.run(members, tg, drv, aggregation_factor(tg, drv));
    return s[0].alive() ? R{phi(s[0].x, s[0].vector(0)), false} : R{0.0, true};
  });
  std::vector<double> vals;
  long trunc = 0;
  for (const auto& r : paths) {
    vals.push_back(r.value);
    trunc += r.truncated;
  }
  MomentEstimate e = summarize(vals, cfg.seed);
  e.truncated = trunc;
  return e;
}

ConsistencyReport gradient_consistency_check(const VectorFieldSystem& system, const ScalarObservable& obs,
                                             const Vector& x, const Vector& v, double t, const McConfig& cfg,
                                             const std::vector<double>& epsilons) {
  if (epsilons.empty()) throw ContractError("epsilon ladder is empty");
  for (double e : epsilons)
    if (!(e > 0.0)) throw ContractError("epsilons must be positive");
  if (!(v.norm() > 0.0)) throw ContractError("direction v must be non-zero");
  const ManifoldModel& model = system.model();
  const FlowEngine engine = engine_with(system, cfg, DerivativeMode::Direct);
  const TimeGrid tg = TimeGrid::uniform(t, cfg.dt);
  const std::size_t ne = epsilons.size();
  const std::vector<double> nodes = {0.0, 0.25, 0.5, 0.75, 1.0};

  // member 0: x with frame v; 1..ne: shifted points; then probe nodes 1..4
  std::vector<MemberInit> members = {{x, column(v)}};
  for (double e : epsilons) members.push_back({model.retract(x + e * v), Matrix()});
  for (std::size_t q = 1; q < nodes.size(); ++q) {
    const Vector y = model.retract(x + nodes[q] * v);
    members.push_back({y, column(tangent_project(model, y, v))});
  }
  const std::size_t probe0 = 1 + ne;

  struct R {
    double rhs = 0.0;
    std::vector<double> lhs;
    std::vector<double> probe;
  };
  auto paths = parallel_map<R>(static_cast<std::size_t>(cfg.paths), cfg.workers, [&](std::size_t i) {
    const BrownianDriver drv = cfg.driver(system, static_cast<long>(i));
    const auto s = engine.run(members, tg, drv, aggregation_factor(tg, drv));
    auto value = [&](std::size_t k) { return s[k].alive() ? obs.f(s[k].x) : 0.0; };
    R r;
    const double f0 = value(0);
    r.rhs = s[0].alive() ? obs.differential(s[0].x, s[0].vector(0)) : 0.0;
    for (std::size_t k = 0; k < ne; ++k) r.lhs.push_back((value(1 + k) - f0) / epsilons[k]);
    r.probe.push_back(s[0].alive() ? s[0].vector(0).norm() : 0.0);
    for (std::size_t q = probe0; q < s.size(); ++q) r.probe.push_back(s[q].alive() ? s[q].vector(0).norm() : 0.0);
    return r;
  });

  ConsistencyReport rep;
  std::vector<double> rhs;
  for (const auto& r : paths) rhs.push_back(r.rhs);
  rep.rhs = summarize(rhs, cfg.seed);
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < ne; ++k) {
    FiniteDifferenceRung rung;
    rung.epsilon = epsilons[k];
    std::vector<double> lhs, diff;
    for (const auto& r : paths) {
      lhs.push_back(r.lhs[k]);
      diff.push_back(r.lhs[k] - r.rhs);
    }
    rung.lhs = summarize(lhs, cfg.seed);
    rung.discrepancy = rung.lhs.value - rep.rhs.value;
    rung.combined_se = std::hypot(rung.lhs.std_error, rep.rhs.std_error);
    rung.paired_se = summarize(diff, cfg.seed).std_error;
    rung.pass = std::abs(rung.discrepancy) <= 3.0 * rung.combined_se;
    if (std::abs(rung.discrepancy) > 0.0) {
      lx.push_back(std::log(epsilons[k]));
      ly.push_back(std::log(std::abs(rung.discrepancy)));
    }
    rep.rungs.push_back(rung);
  }
  if (lx.size() >= 2) {
    const double n = static_cast<double>(lx.size());
    double mx = 0, my = 0;
    for (std::size_t k = 0; k < lx.size(); ++k) {
      mx += lx[k] / n;
      my += ly[k] / n;
    }
    double sxy = 0, sxx = 0;
    for (std::size_t k = 0; k < lx.size(); ++k) {
      sxy += (lx[k] - mx) * (ly[k] - my);
      sxx += (lx[k] - mx) * (lx[k] - mx);
    }
    if (sxx > 0) rep.richardson_slope = sxy / sxx;
  }
  rep.probe_nodes = nodes;
  for (std::size_t q = 0; q < nodes.size(); ++q) {
    std::vector<double> p;
    for (const auto& r : paths) p.push_back(r.probe[q]);
    rep.probe.push_back(summarize(p, cfg.seed));
  }
  return rep;
}

MomentEstimate estimate_nested(const VectorFieldSystem& system, const ScalarObservable& obs, const Vector& x,
                               double t, double s, const McConfig& cfg, long inner_paths) {
  if (inner_paths < 1) throw ContractError("inner path count must be positive");
  const FlowEngine engine = engine_with(system, cfg, DerivativeMode::None);
  const TimeGrid outer = TimeGrid::uniform(t, cfg.dt);
  const TimeGrid inner = TimeGrid::uniform(s, cfg.dt);
  auto paths = parallel_map<double>(static_cast<std::size_t>(cfg.paths), cfg.workers, [&](std::size_t i) {
    const BrownianDriver drv = cfg.driver(system, static_cast<long>(i));
    const auto st = engine.run({{x, Matrix()}}, outer, drv, aggregation_factor(outer, drv));
    if (!st[0].alive()) return 0.0;
    McConfig in = cfg;
    in.stream_offset = cfg.stream_offset + static_cast<std::uint32_t>(cfg.paths + i * inner_paths);
    double sum = 0.0;
    for (long j = 0; j < inner_paths; ++j) {
      const BrownianDriver d2 = in.driver(system, j);
      const auto s2 = engine.run({{st[0].x, Matrix()}}, inner, d2, aggregation_factor(inner, d2));
      if (s2[0].alive()) sum += obs.f(s2[0].x);
    }
    return sum / static_cast<double>(inner_paths);
  });
  return summarize(paths, cfg.seed);
}

}  // namespace flowlab
