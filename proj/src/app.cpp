#include "flowlab/app.hpp"

#include "flowlab/estimators.hpp"
#include "flowlab/parallel.hpp"
#include "flowlab/scenarios.hpp"
#include "flowlab/semigroup.hpp"

#include "CLI11.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace flowlab {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Schema

enum class Kind { Str, Num, Pos, NonNeg, PosInt, UInt, Bool, Nums, PosNums, Points, Strs, Obj };

const std::map<std::string, Kind>& top_schema() {
  static const std::map<std::string, Kind> s = {
      {"command", Kind::Str},       {"scenario", Kind::Str},       {"system", Kind::Obj},
      {"seed", Kind::UInt},         {"paths", Kind::PosInt},       {"dt", Kind::Pos},
      {"fine_dt", Kind::Pos},       {"t", Kind::Pos},              {"p", Kind::Pos},
      {"workers", Kind::PosInt},    {"out", Kind::Str},            {"format", Kind::Str},
      {"x0", Kind::Nums},           {"v0", Kind::Nums},            {"grid", Kind::Points},
      {"radii", Kind::PosNums},     {"horizons", Kind::PosNums},   {"p_list", Kind::PosNums},
      {"dt_ladder", Kind::PosNums}, {"epsilons", Kind::PosNums},   {"theorems", Kind::Strs},
      {"theta", Kind::NonNeg},      {"f", Kind::Str},              {"k0", Kind::Num},
      {"levels", Kind::PosNums},    {"mode", Kind::Str},           {"explosion_radius", Kind::Pos},
      {"backend", Kind::Str},       {"region", Kind::Obj},         {"epsilon_growth", Kind::NonNeg},
      {"epsilon_pole", Kind::Pos},  {"pole", Kind::Nums},          {"terminal", Kind::Bool},
      {"center", Kind::Nums},
  };
  return s;
}

const std::map<std::string, Kind>& region_schema() {
  static const std::map<std::string, Kind> s = {
      {"center", Kind::Nums}, {"radii", Kind::PosNums}, {"directions", Kind::PosInt}, {"include_center", Kind::Bool}};
  return s;
}

const std::map<std::string, Kind>& system_schema() {
  static const std::map<std::string, Kind> s = {
      {"dim", Kind::PosInt},   {"noise_dim", Kind::PosInt}, {"calculus", Kind::Str}, {"diffusion", Kind::Obj},
      {"drift", Kind::Strs},   {"model", Kind::Obj},        {"structure", Kind::Obj}};
  return s;
}

const std::map<std::string, Kind>& model_schema() {
  static const std::map<std::string, Kind> s = {{"kind", Kind::Str}, {"puncture", Kind::Nums}, {"radius", Kind::Pos}};
  return s;
}

const std::map<std::string, Kind>& structure_schema() {
  static const std::map<std::string, Kind> s = {{"isometric", Kind::Bool}, {"gradient", Kind::Bool}};
  return s;
}

std::string kind_text(Kind k) {
  switch (k) {
    case Kind::Str: return "a string";
    case Kind::Num: return "a number";
    case Kind::Pos: return "a positive number";
    case Kind::NonNeg: return "a nonnegative number";
    case Kind::PosInt: return "a positive integer";
    case Kind::UInt: return "an unsigned 64-bit integer";
    case Kind::Bool: return "true or false";
    case Kind::Nums: return "an array of numbers";
    case Kind::PosNums: return "a non-empty array of positive numbers";
    case Kind::Points: return "a non-empty array of points (arrays of numbers)";
    case Kind::Strs: return "an array of strings";
    case Kind::Obj: return "an object";
  }
  return "?";
}

bool finite_number(const json& j) { return j.is_number() && std::isfinite(j.get<double>()); }

bool integral(const json& j) {
  if (j.is_number_integer()) return true;
  if (!finite_number(j)) return false;
  const double v = j.get<double>();
  return v == std::floor(v);
}

bool matches(const json& j, Kind k) {
  switch (k) {
    case Kind::Str: return j.is_string();
    case Kind::Num: return finite_number(j);
    case Kind::Pos: return finite_number(j) && j.get<double>() > 0.0;
    case Kind::NonNeg: return finite_number(j) && j.get<double>() >= 0.0;
    case Kind::PosInt: return integral(j) && j.get<double>() >= 1.0 && j.get<double>() < 2147483648.0;
    case Kind::UInt: return j.is_number_unsigned() || (j.is_number_integer() && j.get<std::int64_t>() >= 0);
    case Kind::Bool: return j.is_boolean();
    case Kind::Nums:
      return j.is_array() && std::all_of(j.begin(), j.end(), [](const json& e) { return finite_number(e); });
    case Kind::PosNums:
      return j.is_array() && !j.empty() &&
             std::all_of(j.begin(), j.end(), [](const json& e) { return finite_number(e) && e.get<double>() > 0.0; });
    case Kind::Points:
      return j.is_array() && !j.empty() && std::all_of(j.begin(), j.end(), [](const json& e) { return matches(e, Kind::Nums); });
    case Kind::Strs:
      return j.is_array() && std::all_of(j.begin(), j.end(), [](const json& e) { return e.is_string(); });
    case Kind::Obj: return j.is_object();
  }
  return false;
}

struct Position {
  std::size_t line = 0, column = 0;
};

Position position_of(const std::string& text, std::size_t offset) {
  Position p{1, 1};
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++p.line;
      p.column = 1;
    } else {
      ++p.column;
    }
  }
  return p;
}

// Offset of `"key"` followed by ':' at or after `from`, or npos.
std::size_t find_key(const std::string& text, const std::string& key, std::size_t from) {
  const std::string quoted = "\"" + key + "\"";
  for (std::size_t at = text.find(quoted, from); at != std::string::npos; at = text.find(quoted, at + 1)) {
    std::size_t k = at + quoted.size();
    while (k < text.size() && std::isspace(static_cast<unsigned char>(text[k]))) ++k;
    if (k < text.size() && text[k] == ':') return at;
  }
  return std::string::npos;
}

[[noreturn]] void fail_at(const std::string& text, const std::vector<std::string>& path, const std::string& message) {
  std::size_t from = 0;
  std::size_t at = std::string::npos;
  for (const auto& key : path) {
    at = find_key(text, key, from);
    if (at == std::string::npos) break;
    from = at;
  }
  std::string where;
  for (const auto& key : path) where += (where.empty() ? "" : ".") + key;
  if (at == std::string::npos || text.empty()) throw ConfigError("config key '" + where + "': " + message);
  const Position p = position_of(text, at);
  throw ConfigError("line " + std::to_string(p.line) + ", column " + std::to_string(p.column) + ": key '" + where +
                        "': " + message,
                    p.line, p.column);
}

void check_object(const json& obj, const std::map<std::string, Kind>& schema, std::vector<std::string> path,
                  const std::string& text) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    auto sub = path;
    sub.push_back(it.key());
    const auto s = schema.find(it.key());
    if (s == schema.end()) fail_at(text, sub, "unknown key");
    if (it.key() == "diffusion") {
      const json& d = it.value();
      const bool ok = d.is_array() && !d.empty() && std::all_of(d.begin(), d.end(), [](const json& r) {
        return r.is_array() && std::all_of(r.begin(), r.end(), [](const json& e) { return e.is_string(); });
      });
      if (!ok) fail_at(text, sub, "must be an array of rows of expression strings");
      continue;
    }
    if (!matches(it.value(), s->second)) fail_at(text, sub, "must be " + kind_text(s->second));
  }
}

// ---------------------------------------------------------------------------
// JSON helpers

json vec_json(const Vector& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vector json_vec(const json& j) {
  Vector v(static_cast<int>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<int>(i)] = j[i].get<double>();
  return v;
}

std::vector<double> json_doubles(const json& j) {
  std::vector<double> v;
  for (const auto& e : j) v.push_back(e.get<double>());
  return v;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json estimate_json(const MomentEstimate& e) {
  return json{{"value", number_or_null(e.value)},
              {"std_error", number_or_null(e.std_error)},
              {"n", e.n},
              {"confidence", e.confidence},
              {"ci", json::array({number_or_null(e.ci_low), number_or_null(e.ci_high)})},
              {"truncated", e.truncated},
              {"seed", e.seed},
              {"lower_bound_only", e.lower_bound_only},
              {"valid", e.valid},
              {"log_space", e.log_space}};
}

json grid_json(const GridEstimate& g, const std::vector<Vector>& grid) {
  json pts = json::array();
  for (std::size_t i = 0; i < g.per_point.size(); ++i)
    pts.push_back({{"x", vec_json(grid[i])}, {"estimate", estimate_json(g.per_point[i])}});
  return {{"per_point", pts}, {"sup", estimate_json(g.sup)}, {"argmax", g.argmax}};
}

json condition_json(const ConditionCheck& c) {
  json j{{"name", c.name},
         {"constant", number_or_null(c.constant)},
         {"holds", c.holds()},
         {"finite", c.finite},
         {"unbounded_trend", c.unbounded_trend},
         {"samples", c.samples}};
  if (c.witness) {
    j["witness"] = vec_json(*c.witness);
    j["witness_ratio"] = number_or_null(c.witness_ratio);
  }
  return j;
}

// ---------------------------------------------------------------------------
// CSV

class Csv {
 public:
  explicit Csv(const std::vector<std::string>& header) { row(header); }
  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) out_ << (i ? "," : "") << csv_field(fields[i]);
    out_ << "\r\n";
  }
  std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
};

std::vector<std::string> coord_names(const std::string& prefix, int n) {
  std::vector<std::string> v;
  for (int i = 1; i <= n; ++i) v.push_back(prefix + std::to_string(i));
  return v;
}

// ---------------------------------------------------------------------------
// Run context

struct Subject {
  std::optional<Scenario> scenario;
  std::shared_ptr<VectorFieldSystem> system;
  Vector x0;
  double default_t = 1.0;
  std::optional<CurvatureData> curvature;
  std::vector<std::string> warnings;
};

class Ctx {
 public:
  explicit Ctx(const json& config) : raw_(config) {
    for (auto it = config.begin(); it != config.end(); ++it)
      if (!is_presentation_key(it.key())) resolved_[it.key()] = it.value();
  }

  json& resolved() { return resolved_; }
  bool has(const std::string& k) const { return raw_.contains(k); }
  const json& raw(const std::string& k) const { return raw_.at(k); }

  double num(const std::string& k, double def) {
    if (!resolved_.contains(k)) resolved_[k] = def;
    return resolved_[k].get<double>();
  }
  long integer(const std::string& k, long def) {
    if (!resolved_.contains(k)) resolved_[k] = def;
    return static_cast<long>(resolved_[k].get<double>());
  }
  bool flag(const std::string& k, bool def) {
    if (!resolved_.contains(k)) resolved_[k] = def;
    return resolved_[k].get<bool>();
  }
  std::string str(const std::string& k, const std::string& def) {
    if (!resolved_.contains(k)) resolved_[k] = def;
    return resolved_[k].get<std::string>();
  }
  std::vector<double> nums(const std::string& k, const std::vector<double>& def) {
    if (!resolved_.contains(k)) resolved_[k] = def;
    return json_doubles(resolved_[k]);
  }
  Vector point(const std::string& k, const Vector& def, int dim) {
    if (!resolved_.contains(k)) resolved_[k] = vec_json(def);
    const Vector v = json_vec(resolved_[k]);
    if (v.size() != dim) throw ConfigError("'" + k + "' must have " + std::to_string(dim) + " components");
    return v;
  }
  std::vector<Vector> points(const std::string& k, const std::vector<Vector>& def, int dim) {
    if (!resolved_.contains(k)) {
      json a = json::array();
      for (const auto& p : def) a.push_back(vec_json(p));
      resolved_[k] = a;
    }
    std::vector<Vector> out;
    for (const auto& p : resolved_[k]) {
      out.push_back(json_vec(p));
      if (out.back().size() != dim) throw ConfigError("points in '" + k + "' must have " + std::to_string(dim) + " components");
    }
    return out;
  }

  std::uint64_t seed() {
    if (!resolved_.contains("seed")) resolved_["seed"] = std::uint64_t{0};
    return resolved_["seed"].get<std::uint64_t>();
  }

  int workers() const {
    return raw_.contains("workers") ? static_cast<int>(raw_["workers"].get<double>()) : default_worker_count();
  }

  McConfig mc(long default_paths) {
    McConfig c;
    c.paths = integer("paths", default_paths);
    c.dt = num("dt", 1e-3);
    if (has("fine_dt")) c.fine_dt = num("fine_dt", c.dt);
    c.seed = seed();
    c.workers = workers();
    c.flow.explosion_radius = num("explosion_radius", 1e6);
    const std::string mode = str("mode", "log_radial");
    if (mode == "log_radial") c.flow.mode = DerivativeMode::LogRadial;
    else if (mode == "direct") c.flow.mode = DerivativeMode::Direct;
    else throw ConfigError("'mode' must be \"log_radial\" or \"direct\"");
    return c;
  }

 private:
  json raw_;
  json resolved_ = json::object();
};

std::shared_ptr<const ManifoldModel> model_from_json(const json& m, int dim) {
  const std::string kind = m.value("kind", std::string("flat"));
  if (kind == "flat") return std::make_shared<const ManifoldModel>(ManifoldModel::flat(dim));
  if (kind == "punctured") {
    const Vector p = m.contains("puncture") ? json_vec(m["puncture"]) : Vector(Vector::Zero(dim));
    if (p.size() != dim) throw ConfigError("system.model.puncture must have " + std::to_string(dim) + " components");
    return std::make_shared<const ManifoldModel>(ManifoldModel::punctured_flat(dim, p));
  }
  if (kind == "sphere")
    return std::make_shared<const ManifoldModel>(
        ManifoldModel::embedded(std::make_shared<const SphereEmbedding>(dim, m.value("radius", 1.0))));
  if (kind == "paraboloid") {
    if (dim != 3) throw ConfigError("system.model.kind \"paraboloid\" needs dim = 3");
    return std::make_shared<const ManifoldModel>(ManifoldModel::embedded(std::make_shared<const ParaboloidEmbedding>()));
  }
  throw ConfigError("system.model.kind must be one of flat, punctured, sphere, paraboloid");
}

Subject load_subject(Ctx& ctx) {
  Subject s;
  if (ctx.has("system")) {
    if (ctx.has("scenario")) throw ConfigError("give either 'scenario' or 'system', not both");
    const json& j = ctx.raw("system");
    for (const char* key : {"dim", "noise_dim", "diffusion"})
      if (!j.contains(key)) throw ConfigError(std::string("system.") + key + " is required");
    ExpressionSystemSpec spec;
    spec.dim = j["dim"].get<int>();
    spec.noise_dim = j["noise_dim"].get<int>();
    const std::string calc = j.value("calculus", std::string("stratonovich"));
    if (calc == "stratonovich") spec.calculus = Calculus::Stratonovich;
    else if (calc == "ito") spec.calculus = Calculus::Ito;
    else throw ConfigError("system.calculus must be \"stratonovich\" or \"ito\"");
    for (const auto& row : j["diffusion"]) spec.diffusion.push_back(row.get<std::vector<std::string>>());
    if (j.contains("drift")) spec.drift = j["drift"].get<std::vector<std::string>>();
    auto model = model_from_json(j.value("model", json::object()), spec.dim);
    VectorFieldSystem sys = system_from_expressions(spec, model);
    if (j.contains("structure"))
      sys = sys.with_structure(j["structure"].value("isometric", false), j["structure"].value("gradient", false));
    s.system = std::make_shared<VectorFieldSystem>(sys.with_label("custom"));
    s.x0 = Vector::Zero(spec.dim);
    if (model->kind() == ManifoldModel::Kind::Embedded) {
      Vector e = Vector::Zero(spec.dim);
      e[spec.dim - 1] = 1.0;
      s.x0 = model->retract(model->embedding()->compact() ? e : s.x0);
    }
    if (model->excluded_point() && (s.x0 - *model->excluded_point()).norm() == 0.0) s.x0[0] += 1.0;
    return s;
  }
  if (!ctx.has("scenario")) throw ConfigError("a 'scenario' or a 'system' is required");
  s.scenario = builtin(ctx.str("scenario", ""));
  ctx.resolved()["scenario"] = s.scenario->name;
  s.system = std::make_shared<VectorFieldSystem>(s.scenario->system);
  s.x0 = s.scenario->default_x0;
  s.default_t = s.scenario->default_t;
  s.curvature = s.scenario->curvature;
  if (s.scenario->warning) s.warnings.push_back(*s.scenario->warning);
  return s;
}

std::function<double(const Vector&)> scalar_function(const std::string& text, int dim, const std::string& key) {
  try {
    auto e = std::make_shared<Expression>(Expression::parse(text, state_variable_names(dim)));
    return [e](const Vector& x) {
      thread_local std::vector<double> vars;
      bind_state_variables({x.data(), static_cast<std::size_t>(x.size())}, vars);
      return (*e)(vars);
    };
  } catch (const ExpressionError& ex) {
    throw ConfigError("'" + key + "' column " + std::to_string(ex.column()) + ": " + ex.what());
  }
}

RegionSpec region_from(Ctx& ctx, const ManifoldModel& model, int default_radii, int default_dirs) {
  RegionSpec r;
  json& res = ctx.resolved();
  json reg = res.contains("region") ? res["region"] : json::object();
  if (reg.contains("center")) {
    r.center = json_vec(reg["center"]);
    if (r.center->size() != model.ambient_dim()) throw ConfigError("region.center has the wrong dimension");
  }
  if (!reg.contains("radii")) reg["radii"] = RegionSpec::log_radii(0.1, 1e3, default_radii);
  r.radii = json_doubles(reg["radii"]);
  if (!reg.contains("directions")) reg["directions"] = default_dirs;
  r.directions = reg["directions"].get<int>();
  if (!reg.contains("include_center")) reg["include_center"] = true;
  r.include_center = reg["include_center"].get<bool>();
  res["region"] = reg;
  return r;
}

// ---------------------------------------------------------------------------
// Commands

struct CommandResult {
  json result;
  std::string csv;
  bool invalid = false;
};

CommandResult cmd_simulate(Ctx& ctx, Subject& s) {
  const VectorFieldSystem& sys = *s.system;
  McConfig mc = ctx.mc(10);
  const double t = ctx.num("t", s.default_t);
  const Vector x0 = ctx.point("x0", s.x0, sys.dim());
  const bool tangent = ctx.has("v0");
  const Vector v0 = tangent ? ctx.point("v0", Vector::Zero(sys.dim()), sys.dim()) : Vector();
  const TimeGrid grid = TimeGrid::uniform(t, mc.dt);
  auto paths = parallel_map<Trajectory>(static_cast<std::size_t>(mc.paths), mc.workers, [&](std::size_t i) {
    const BrownianDriver drv = mc.driver(sys, static_cast<long>(i));
    if (tangent) return integrate_derivative_flow(sys, x0, v0, grid, drv, mc.flow.mode, mc.flow);
    return integrate_flow(sys, x0, grid, drv, mc.flow);
  });
  long exploded = 0, exits = 0, alive = 0;
  Vector mean = Vector::Zero(sys.dim());
  json times = json::array();
  for (const auto& p : paths) {
    exploded += p.exploded;
    exits += p.domain_exit;
    times.push_back(p.explosion_time ? json(*p.explosion_time) : json(nullptr));
    if (!p.exploded && !p.domain_exit) {
      mean += p.states.back();
      ++alive;
    }
  }
  if (alive > 0) mean /= static_cast<double>(alive);
  std::ostringstream csv;
  write_trajectory_csv(csv, paths, sys.dim(), tangent);
  CommandResult r;
  r.result = {{"paths", mc.paths},       {"steps", grid.steps},     {"exploded", exploded},
              {"domain_exits", exits},   {"explosion_times", times}, {"final_mean", alive ? vec_json(mean) : json(nullptr)}};
  r.csv = csv.str();
  return r;
}

CommandResult cmd_derivative_moments(Ctx& ctx, Subject& s) {
  const VectorFieldSystem& sys = *s.system;
  McConfig mc = ctx.mc(10000);
  const double t = ctx.num("t", s.default_t);
  const double p = ctx.num("p", 2.0);
  const bool terminal = ctx.flag("terminal", false);
  const auto grid = ctx.points("grid", {s.x0}, sys.dim());
  const GridEstimate g = estimate_sup_derivative_moment(sys, grid, p, t, mc, terminal);
  CommandResult r;
  r.result = grid_json(g, grid);
  r.result["p"] = p;
  r.result["t"] = t;
  r.result["terminal"] = terminal;
  auto header = coord_names("x", sys.dim());
  header.insert(header.begin(), "point");
  for (const char* h : {"estimate", "se", "n", "truncated"}) header.push_back(h);
  Csv csv(header);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    std::vector<std::string> row{std::to_string(i)};
    for (int k = 0; k < sys.dim(); ++k) row.push_back(format_number(grid[i][k]));
    const auto& e = g.per_point[i];
    row.insert(row.end(), {format_number(e.value), format_number(e.std_error), std::to_string(e.n), std::to_string(e.truncated)});
    csv.row(row);
  }
  r.csv = csv.str();
  r.invalid = !g.sup.valid;
  return r;
}

CommandResult cmd_stopped_moments(Ctx& ctx, Subject& s) {
  const VectorFieldSystem& sys = *s.system;
  McConfig mc = ctx.mc(10000);
  const double t = ctx.num("t", s.default_t);
  const auto grid = ctx.points("grid", {s.x0}, sys.dim());
  const auto radii = ctx.nums("radii", {2, 3, 4, 6, 8});
  const Vector center = ctx.point("center", Vector::Zero(sys.dim()), sys.dim());
  const StoppedMomentResult res = estimate_stopped_moment(sys, grid, radii, t, mc, center);
  CommandResult r;
  json rungs = json::array();
  Csv csv({"radius", "estimate", "se", "n", "exit_fraction"});
  for (std::size_t j = 0; j < radii.size(); ++j) {
    json g = grid_json(res.rungs[j], grid);
    g["radius"] = radii[j];
    g["exit_fraction"] = res.exit_fraction[j];
    rungs.push_back(g);
    const auto& e = res.rungs[j].sup;
    csv.row({format_number(radii[j]), format_number(e.value), format_number(e.std_error), std::to_string(e.n),
             format_number(res.exit_fraction[j])});
  }
  r.result = {{"t", t}, {"rungs", rungs}, {"liminf_proxy", number_or_null(res.liminf_proxy)},
              {"liminf_note", "minimum over the three largest radii of a finite ladder"}};
  r.csv = csv.str();
  return r;
}

CommandResult cmd_exp_functional(Ctx& ctx, Subject& s) {
  const VectorFieldSystem& sys = *s.system;
  McConfig mc = ctx.mc(10000);
  const double t = ctx.num("t", s.default_t);
  const double theta = ctx.num("theta", 0.05);
  const std::string ftext = ctx.str("f", "1 + log(1 + x1^2)");
  const auto f = scalar_function(ftext, sys.dim(), "f");
  const Vector x0 = ctx.point("x0", s.x0, sys.dim());
  const ExpFunctionalResult res = estimate_exponential_functional(sys, f, x0, t, theta, mc);
  CommandResult r;
  const double combined = std::hypot(res.estimate.std_error, res.jensen.std_error);
  r.result = {{"estimate", estimate_json(res.estimate)},
              {"jensen", estimate_json(res.jensen)},
              {"combined_se", combined},
              {"jensen_ordering_holds", res.estimate.value <= res.jensen.value + 3.0 * combined}};
  Csv csv({"quantity", "t", "estimate", "se", "n"});
  csv.row({"exp_functional", format_number(t), format_number(res.estimate.value), format_number(res.estimate.std_error),
           std::to_string(res.estimate.n)});
  csv.row({"jensen_bound", format_number(t), format_number(res.jensen.value), format_number(res.jensen.std_error),
           std::to_string(res.jensen.n)});
  r.csv = csv.str();
  r.invalid = !res.estimate.valid;
  return r;
}

CommandResult cmd_radial(Ctx& ctx, Subject& s) {
  const VectorFieldSystem& sys = *s.system;
  McConfig mc = ctx.mc(10000);
  const double t = ctx.num("t", s.default_t);
  const double p = ctx.num("p", 2.0);
  const Vector x0 = ctx.point("x0", s.x0, sys.dim());
  CurvatureData data = s.curvature.value_or(CurvatureData{});
  const Vector pole_default = sys.model().kind() == ManifoldModel::Kind::Embedded ? s.x0 : Vector(Vector::Zero(sys.dim()));
  data.pole = ctx.point("pole", data.pole.value_or(pole_default), sys.dim());
  const auto levels = ctx.has("levels") ? ctx.nums("levels", {}) : std::vector<double>{};
  std::optional<double> k0;
  if (ctx.has("k0")) k0 = ctx.num("k0", 0.0);
  const RadialMomentResult res = estimate_radial_moment(sys, data, x0, p, t, mc, levels, k0);
  CommandResult r;
  json ex = json::array();
  Csv csv({"level", "probability", "se", "n"});
  for (std::size_t j = 0; j < res.levels.size(); ++j) {
    ex.push_back({{"level", res.levels[j]}, {"estimate", estimate_json(res.exit_probability[j])}});
    csv.row({format_number(res.levels[j]), format_number(res.exit_probability[j].value),
             format_number(res.exit_probability[j].std_error), std::to_string(res.exit_probability[j].n)});
  }
  r.result = {{"p", p}, {"t", t}, {"moment", estimate_json(res.moment)}, {"exit_probability", ex}};
  if (res.bound) {
    r.result["bound"] = *res.bound;
    r.result["within_bound"] = *res.within_bound;
  }
  r.csv = csv.str();
  r.invalid = !res.moment.valid;
  return r;
}

CommandResult cmd_exponent(Ctx& ctx, Subject& s) {
  const VectorFieldSystem& sys = *s.system;
  McConfig mc = ctx.mc(10000);
  const auto grid = ctx.points("grid", {s.x0}, sys.dim());
  const auto ps = ctx.nums("p_list", {1.0, 2.0});
  const auto horizons = ctx.nums("horizons", {1, 2, 3, 4});
  const auto fits = estimate_moment_exponent(sys, grid, ps, horizons, mc);
  CommandResult r;
  json out = json::array();
  Csv csv({"p", "t", "log_moment", "residual"});
  for (const auto& f : fits) {
    json lm = json::array(), res = json::array();
    for (std::size_t h = 0; h < f.horizons.size(); ++h) {
      lm.push_back(number_or_null(f.log_moments[h]));
      res.push_back(number_or_null(f.residuals[h]));
      csv.row({format_number(f.p), format_number(f.horizons[h]), format_number(f.log_moments[h]),
               format_number(f.residuals[h])});
    }
    out.push_back({{"p", f.p},
                   {"horizons", f.horizons},
                   {"log_moments", lm},
                   {"residuals", res},
                   {"excluded", f.excluded},
                   {"slope", number_or_null(f.slope)},
                   {"intercept", number_or_null(f.intercept)}});
    r.invalid = r.invalid || !std::isfinite(f.slope);
  }
  r.result = {{"fits", out}};
  r.csv = csv.str();
  return r;
}

CommandResult cmd_certify(Ctx& ctx, Subject& s) {
  const VectorFieldSystem& sys = *s.system;
  CertifyConfig cc;
  if (ctx.has("theorems")) cc.theorems = ctx.resolved()["theorems"].get<std::vector<std::string>>();
  else ctx.resolved()["theorems"] = known_theorems();
  cc.p = ctx.num("p", 2.0);
  cc.epsilon_growth = ctx.num("epsilon_growth", 0.0);
  cc.epsilon_pole = ctx.num("epsilon_pole", 0.5);
  cc.region = region_from(ctx, sys.model(), 16, 32);
  if (ctx.has("pole")) cc.pole = ctx.point("pole", Vector(), sys.dim());
  if (s.curvature) cc.curvature = &*s.curvature;
  const VerdictReport rep = certify(sys, cc);
  CommandResult r;
  json entries = json::array();
  Csv csv({"theorem", "status", "condition", "constant", "holds"});
  bool all_expected = true;
  for (const auto& e : rep.entries) {
    json conds = json::array();
    for (const auto& c : e.conditions) {
      conds.push_back(condition_json(c));
      csv.row({e.theorem, e.status, c.name, format_number(c.constant), c.holds() ? "true" : "false"});
    }
    if (e.conditions.empty()) csv.row({e.theorem, e.status, "", "", ""});
    json j{{"theorem", e.theorem}, {"status", e.status}, {"note", e.note}, {"conditions", conds}};
    if (e.failing_sample) j["failing_sample"] = vec_json(*e.failing_sample);
    if (s.scenario) {
      const auto it = s.scenario->expected_verdicts.find(e.theorem);
      if (it != s.scenario->expected_verdicts.end()) {
        j["expected"] = it->second;
        all_expected = all_expected && it->second == e.status;
      }
    }
    entries.push_back(j);
  }
  r.result = {{"evidence", "sampled"}, {"entries", entries}};
  if (s.scenario) r.result["matches_expected"] = all_expected;
  r.csv = csv.str();
  return r;
}

CommandResult cmd_hp_scan(Ctx& ctx, Subject& s) {
  const VectorFieldSystem sys = with_finite_difference_jacobians(*s.system);
  const double p = ctx.num("p", 2.0);
  const RegionSpec region = region_from(ctx, sys.model(), 8, 8);
  std::vector<HpBackend> backends;
  if (ctx.has("backend")) {
    backends.push_back(parse_backend(ctx.str("backend", "")));
  } else {
    for (HpBackend b : {HpBackend::Euclidean, HpBackend::Ricci, HpBackend::Gauss})
      if (backend_available(sys, b)) backends.push_back(b);
  }
  if (backends.empty()) throw CapabilityError("no H_p backend applies to this system");
  const CurvatureData* cd = s.curvature ? &*s.curvature : nullptr;
  const auto samples = sample_region(sys.model(), region);
  auto header = coord_names("x", sys.dim());
  header.insert(header.begin(), "sample");
  for (const auto& v : coord_names("v", sys.dim())) header.push_back(v);
  header.push_back("backend");
  header.push_back("value");
  Csv csv(header);
  std::vector<double> best(backends.size(), -std::numeric_limits<double>::infinity());
  std::vector<json> where(backends.size());
  double disagreement = 0.0;
  long count = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Vector& x = samples[i].x;
    for (const auto& v : tangent_directions(sys.model(), x, 4)) {
      std::vector<double> vals;
      for (std::size_t b = 0; b < backends.size(); ++b) {
        const double h = eval_Hp(sys, cd, x, v, p, backends[b]) / v.squaredNorm();
        vals.push_back(h);
        if (h > best[b]) {
          best[b] = h;
          where[b] = {{"x", vec_json(x)}, {"v", vec_json(v)}};
        }
        std::vector<std::string> row{std::to_string(i)};
        for (int k = 0; k < x.size(); ++k) row.push_back(format_number(x[k]));
        for (int k = 0; k < v.size(); ++k) row.push_back(format_number(v[k]));
        row.push_back(backend_name(backends[b]));
        row.push_back(format_number(h));
        csv.row(row);
      }
      for (std::size_t a = 0; a < vals.size(); ++a)
        for (std::size_t b = a + 1; b < vals.size(); ++b)
          disagreement = std::max(disagreement, std::abs(vals[a] - vals[b]) / (1.0 + std::abs(vals[a])));
      ++count;
    }
  }
  json per = json::array();
  for (std::size_t b = 0; b < backends.size(); ++b)
    per.push_back({{"backend", backend_name(backends[b])}, {"max", number_or_null(best[b])}, {"argmax", where[b]}});
  CommandResult r;
  r.result = {{"p", p}, {"pairs", count}, {"backends", per}};
  if (backends.size() >= 2) r.result["max_relative_disagreement"] = disagreement;
  r.csv = csv.str();
  return r;
}

CommandResult cmd_semigroup_check(Ctx& ctx, Subject& s) {
  const VectorFieldSystem& sys = *s.system;
  McConfig mc = ctx.mc(10000);
  const double t = ctx.num("t", s.default_t);
  const Vector x0 = ctx.point("x0", s.x0, sys.dim());
  const Vector v0 = ctx.point("v0", tangent_basis(sys.model(), x0).col(0), sys.dim());
  ScalarObservable obs;
  obs.f = scalar_function(ctx.str("f", "x1"), sys.dim(), "f");
  const auto eps = ctx.nums("epsilons", {1e-1, 1e-2, 1e-3});
  const ConsistencyReport rep = gradient_consistency_check(sys, obs, x0, v0, t, mc, eps);
  CommandResult r;
  json rungs = json::array();
  Csv csv({"epsilon", "lhs", "se_lhs", "rhs", "se_rhs", "pass"});
  for (const auto& g : rep.rungs) {
    rungs.push_back({{"epsilon", g.epsilon},
                     {"lhs", g.lhs.value},
                     {"se_lhs", g.lhs.std_error},
                     {"rhs", rep.rhs.value},
                     {"se_rhs", rep.rhs.std_error},
                     {"discrepancy", g.discrepancy},
                     {"combined_se", g.combined_se},
                     {"paired_se", g.paired_se},
                     {"pass", g.pass}});
    csv.row({format_number(g.epsilon), format_number(g.lhs.value), format_number(g.lhs.std_error),
             format_number(rep.rhs.value), format_number(rep.rhs.std_error), g.pass ? "true" : "false"});
  }
  json probe = json::array();
  for (std::size_t q = 0; q < rep.probe.size(); ++q)
    probe.push_back({{"r", rep.probe_nodes[q]}, {"estimate", estimate_json(rep.probe[q])}});
  r.result = {{"t", t}, {"rhs", estimate_json(rep.rhs)}, {"rungs", rungs}, {"continuity_probe", probe}};
  r.result["richardson_slope"] = rep.richardson_slope ? json(*rep.richardson_slope) : json(nullptr);
  r.csv = csv.str();
  return r;
}

CommandResult cmd_oracle_test(Ctx& ctx, Subject& s) {
  if (!s.scenario || !s.scenario->oracle) throw CapabilityError("oracle-test needs a scenario with a closed-form solution");
  const VectorFieldSystem& sys = *s.system;
  std::vector<double> ladder = ctx.nums("dt_ladder", {4e-3, 1e-3, 2.5e-4});
  std::sort(ladder.begin(), ladder.end(), std::greater<>());
  const double t = ctx.num("t", s.default_t);
  const long wanted = ctx.integer("paths", 200);
  const std::uint64_t seed = ctx.seed();
  const double fine = ladder.back();
  const Vector x0 = ctx.point("x0", s.x0, sys.dim());
  const int workers = ctx.workers();
  FlowOptions fo;
  fo.mode = DerivativeMode::None;
  fo.explosion_radius = ctx.num("explosion_radius", 1e6);
  const TimeGrid fine_grid = TimeGrid::uniform(t, fine);
  std::vector<TimeGrid> grids;
  for (double dt : ladder) grids.push_back(TimeGrid::uniform(t, dt));

  struct Attempt {
    bool accepted = false;
    bool singular = false;
    std::vector<double> err2;
  };
  // Candidates are drawn in fixed-size batches so the accepted set does not depend on the worker count.
  std::vector<Attempt> accepted;
  long rejected_singular = 0, rejected_explosion = 0, attempts = 0;
  const long max_attempts = 50 * wanted;
  while (static_cast<long>(accepted.size()) < wanted && attempts < max_attempts) {
    const long batch = std::min<long>(wanted, max_attempts - attempts);
    auto res = parallel_map<Attempt>(static_cast<std::size_t>(batch), workers, [&](std::size_t i) {
      const BrownianDriver drv(seed, static_cast<std::uint32_t>(attempts + static_cast<long>(i)), sys.noise_dim(), fine);
      Attempt a;
      const OracleTrajectory o = oracle_flow(*s.scenario, x0, drv, fine_grid);
      if (o.singular) {
        a.singular = true;
        return a;
      }
      for (const auto& g : grids) {
        const Trajectory tr = integrate_flow(sys, x0, g, drv, fo);
        if (tr.exploded || tr.domain_exit) return a;
        a.err2.push_back((tr.states.back() - o.states.back()).squaredNorm());
      }
      a.accepted = true;
      return a;
    });
    for (auto& a : res) {
      ++attempts;
      if (a.accepted) {
        if (static_cast<long>(accepted.size()) < wanted) accepted.push_back(std::move(a));
      } else if (a.singular) {
        ++rejected_singular;
      } else {
        ++rejected_explosion;
      }
    }
  }
  CommandResult r;
  std::vector<double> rms(ladder.size(), 0.0);
  for (const auto& a : accepted)
    for (std::size_t k = 0; k < ladder.size(); ++k) rms[k] += a.err2[k];
  json rows = json::array();
  Csv csv({"dt", "rms_error", "accepted"});
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < ladder.size(); ++k) {
    rms[k] = accepted.empty() ? std::numeric_limits<double>::quiet_NaN() : std::sqrt(rms[k] / static_cast<double>(accepted.size()));
    rows.push_back({{"dt", ladder[k]}, {"rms_error", number_or_null(rms[k])}});
    csv.row({format_number(ladder[k]), format_number(rms[k]), std::to_string(accepted.size())});
    if (rms[k] > 0.0 && std::isfinite(rms[k])) {
      lx.push_back(std::log(ladder[k]));
      ly.push_back(std::log(rms[k]));
    }
  }
  double slope = std::numeric_limits<double>::quiet_NaN();
  if (lx.size() >= 2) {
    const double n = static_cast<double>(lx.size());
    double mx = 0, my = 0, sxy = 0, sxx = 0;
    for (std::size_t k = 0; k < lx.size(); ++k) mx += lx[k] / n, my += ly[k] / n;
    for (std::size_t k = 0; k < lx.size(); ++k) sxy += (lx[k] - mx) * (ly[k] - my), sxx += (lx[k] - mx) * (lx[k] - mx);
    slope = sxy / sxx;
  }
  r.result = {{"t", t},
              {"ladder", rows},
              {"slope", number_or_null(slope)},
              {"accepted", accepted.size()},
              {"rejected_singular", rejected_singular},
              {"rejected_explosion", rejected_explosion},
              {"singular_threshold", kInversionSingularThreshold}};
  r.csv = csv.str();
  r.invalid = static_cast<long>(accepted.size()) < wanted || !std::isfinite(slope);
  return r;
}

CommandResult cmd_list_scenarios() {
  CommandResult r;
  json list = json::array();
  Csv csv({"name", "notes"});
  for (const auto& name : builtin_names()) {
    const Scenario s = builtin(name);
    json j{{"name", s.name}, {"notes", s.notes}, {"has_oracle", static_cast<bool>(s.oracle)},
           {"default_t", s.default_t}, {"expected_verdicts", s.expected_verdicts}};
    if (s.warning) j["warning"] = *s.warning;
    list.push_back(j);
    csv.row({s.name, s.notes});
  }
  r.result = {{"scenarios", list}};
  r.csv = csv.str();
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"simulate",       "derivative-moments", "stopped-moments",
                                                 "exp-functional", "radial",             "exponent",
                                                 "certify",        "hp-scan",            "semigroup-check",
                                                 "oracle-test",    "list-scenarios"};
  return names;
}

bool is_presentation_key(const std::string& key) { return key == "workers" || key == "out" || key == "format"; }

json parse_config_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t offset = e.byte > 0 ? e.byte - 1 : 0;
    const Position p = position_of(text, offset);
    std::string what = e.what();
    const auto colon = what.find("parse error");
    if (colon != std::string::npos) what = what.substr(colon);
    throw ConfigError("line " + std::to_string(p.line) + ", column " + std::to_string(p.column) + ": " + what, p.line,
                      p.column);
  }
}

void validate_config(const json& config, const std::string& text) {
  if (!config.is_object()) throw ConfigError("the config must be a JSON object", text.empty() ? 0 : 1, 1);
  check_object(config, top_schema(), {}, text);
  if (config.contains("region")) check_object(config["region"], region_schema(), {"region"}, text);
  if (config.contains("system")) {
    check_object(config["system"], system_schema(), {"system"}, text);
    if (config["system"].contains("model")) check_object(config["system"]["model"], model_schema(), {"system", "model"}, text);
    if (config["system"].contains("structure"))
      check_object(config["system"]["structure"], structure_schema(), {"system", "structure"}, text);
  }
  if (config.contains("command")) {
    const auto c = config["command"].get<std::string>();
    if (std::find(command_names().begin(), command_names().end(), c) == command_names().end())
      fail_at(text, {"command"}, "unknown command '" + c + "'");
  }
  if (config.contains("format")) {
    const auto f = config["format"].get<std::string>();
    if (f != "json" && f != "csv" && f != "both") fail_at(text, {"format"}, "must be json, csv or both");
  }
  if (config.contains("mode")) {
    const auto m = config["mode"].get<std::string>();
    if (m != "log_radial" && m != "direct") fail_at(text, {"mode"}, "must be log_radial or direct");
  }
  if (config.contains("backend")) {
    const auto b = config["backend"].get<std::string>();
    if (b != "euclidean" && b != "ricci" && b != "gauss") fail_at(text, {"backend"}, "must be euclidean, ricci or gauss");
  }
  if (config.contains("theorems"))
    for (const auto& id : config["theorems"]) {
      const auto& known = known_theorems();
      if (std::find(known.begin(), known.end(), id.get<std::string>()) == known.end())
        fail_at(text, {"theorems"}, "unknown theorem id '" + id.get<std::string>() + "'");
    }
  for (const char* key : {"radii", "horizons", "levels"})
    if (config.contains(key)) {
      const auto v = json_doubles(config[key]);
      for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] > v[i - 1])) fail_at(text, {key}, "must be strictly increasing");
    }
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string config_hash(const json& resolved) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(resolved.dump())));
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

RunOutput run(const json& config) {
  validate_config(config);
  if (!config.contains("command")) throw ConfigError("'command' is required");
  const std::string command = config["command"].get<std::string>();
  Ctx ctx(config);
  CommandResult res;
  json warnings = json::array();
  if (command == "list-scenarios") {
    res = cmd_list_scenarios();
  } else {
    Subject s = load_subject(ctx);
    for (const auto& w : s.warnings) warnings.push_back(w);
    if (command == "simulate") res = cmd_simulate(ctx, s);
    else if (command == "derivative-moments") res = cmd_derivative_moments(ctx, s);
    else if (command == "stopped-moments") res = cmd_stopped_moments(ctx, s);
    else if (command == "exp-functional") res = cmd_exp_functional(ctx, s);
    else if (command == "radial") res = cmd_radial(ctx, s);
    else if (command == "exponent") res = cmd_exponent(ctx, s);
    else if (command == "certify") res = cmd_certify(ctx, s);
    else if (command == "hp-scan") res = cmd_hp_scan(ctx, s);
    else if (command == "semigroup-check") res = cmd_semigroup_check(ctx, s);
    else if (command == "oracle-test") res = cmd_oracle_test(ctx, s);
    else throw ConfigError("unknown command '" + command + "'");
  }
  RunOutput out;
  const json& resolved = ctx.resolved();
  out.report = {{"schema", kReportSchema},
                {"command", command},
                {"config", resolved},
                {"config_hash", config_hash(resolved)},
                {"seed", resolved.contains("seed") ? resolved["seed"] : json(0)},
                {"result", res.result}};
  if (!warnings.empty()) out.report["warnings"] = warnings;
  out.csv = std::move(res.csv);
  out.exit_code = res.invalid ? kExitInvalidEstimate : kExitOk;
  return out;
}

// ---------------------------------------------------------------------------
// CLI

int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"flowlab: stochastic flows, derivative flows and completeness criteria"};
  app.require_subcommand(1);

  struct Flags {
    std::string config, scenario, out, format;
    std::uint64_t seed = 0;
    long paths = 0;
    double dt = 0, t = 0, p = 0;
    int workers = 0;
  } flags;
  std::map<std::string, std::vector<CLI::Option*>> opts;

  auto add_common = [&](CLI::App* sub) {
    auto& o = opts[sub->get_name()];
    o.push_back(sub->add_option("--config", flags.config, "JSON config file")->check(CLI::ExistingFile));
    o.push_back(sub->add_option("--scenario", flags.scenario, "built-in scenario, e.g. ou(1)"));
    o.push_back(sub->add_option("--seed", flags.seed, "64-bit seed (overrides FLOWLAB_SEED and the config)"));
    o.push_back(sub->add_option("--paths", flags.paths, "number of sample paths")->check(CLI::PositiveNumber));
    o.push_back(sub->add_option("--dt", flags.dt, "time step")->check(CLI::PositiveNumber));
    o.push_back(sub->add_option("--t", flags.t, "horizon")->check(CLI::PositiveNumber));
    o.push_back(sub->add_option("--p", flags.p, "moment order")->check(CLI::PositiveNumber));
    o.push_back(sub->add_option("--workers", flags.workers, "worker threads")->check(CLI::PositiveNumber));
    o.push_back(sub->add_option("--out", flags.out, "output directory"));
    o.push_back(sub->add_option("--format", flags.format, "json, csv or both")->check(CLI::IsMember({"json", "csv", "both"})));
  };
  for (const auto& name : command_names()) add_common(app.add_subcommand(name, "run " + name));
  add_common(app.add_subcommand("run", "run the command named in the config"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  auto given = [&](std::size_t i) { return opts[name][i]->count() > 0; };

  try {
    json config = json::object();
    if (given(0)) {
      std::ifstream in(flags.config, std::ios::binary);
      std::stringstream buf;
      buf << in.rdbuf();
      const std::string text = buf.str();
      config = parse_config_text(text);
      try {
        validate_config(config, text);
      } catch (const ConfigError& e) {
        err << flags.config << ": " << e.what() << "\n";
        return kExitValidation;
      }
    }
    if (name != "run") config["command"] = name;
    else if (!config.contains("command")) throw ConfigError("'run' needs a config with a 'command' key");
    if (given(1)) config["scenario"] = flags.scenario;
    if (const char* env = std::getenv("FLOWLAB_SEED")) {
      std::uint64_t v = 0;
      const std::string s = env;
      const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
      if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ConfigError("FLOWLAB_SEED must be an unsigned integer");
      config["seed"] = v;
    }
    if (given(2)) config["seed"] = flags.seed;
    if (given(3)) config["paths"] = flags.paths;
    if (given(4)) config["dt"] = flags.dt;
    if (given(5)) config["t"] = flags.t;
    if (given(6)) config["p"] = flags.p;
    if (given(7)) config["workers"] = flags.workers;
    if (given(8)) config["out"] = flags.out;
    if (given(9)) config["format"] = flags.format;

    const RunOutput result = run(config);
    const std::string format = config.value("format", std::string("json"));
    const std::string report = result.report.dump(2) + "\n";
    const std::string command = config["command"].get<std::string>();
    if (config.contains("out")) {
      const std::filesystem::path dir = config["out"].get<std::string>();
      std::filesystem::create_directories(dir);
      if (format != "csv") std::ofstream(dir / (command + ".json"), std::ios::binary) << report;
      if (format != "json") std::ofstream(dir / (command + ".csv"), std::ios::binary) << result.csv;
    } else {
      if (format != "csv") out << report;
      if (format != "json") out << result.csv;
    }
    if (result.exit_code == kExitInvalidEstimate) err << "warning: estimate flagged invalid\n";
    return result.exit_code;
  } catch (const ConfigError& e) {
    err << (given(0) ? flags.config + ": " : std::string()) << e.what() << "\n";
    return kExitValidation;
  } catch (const ExpressionError& e) {
    err << "expression error at column " << e.column() << ": " << e.what() << "\n";
    return kExitValidation;
  } catch (const ContractError& e) {
    err << "invalid input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const CapabilityError& e) {
    err << "unsupported: " << e.what() << "\n";
    return kExitValidation;
  } catch (const DomainError& e) {
    err << "domain error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace flowlab
