#include "flowlab/scenarios.hpp"

#include "json.hpp"
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <complex>
#include <regex>
#include <sstream>

namespace flowlab {

namespace {

using Verdicts = std::map<std::string, std::string>;

constexpr const char* kC = "certified";
constexpr const char* kF = "failed";
constexpr const char* kNA = "not-applicable";
constexpr const char* kS = "sampled-only";
constexpr double sigma = 0.5;  // linear(M) noise strength

Verdicts all_of(const char* status) {
  Verdicts v;
  for (const auto& id : known_theorems()) v[id] = status;
  return v;
}

Scenario make(std::string name, std::shared_ptr<const ManifoldModel> model, VectorFieldSystem system, Vector x0) {
  VectorFieldSystem labelled = system.with_label(name);
  return Scenario{std::move(name), std::move(model), std::move(labelled), std::move(x0), 1.0,
                  std::nullopt, {}, {}, "", std::nullopt};
}

// Walks the fine driver steps and reports `state(t, B_t)` on the coarse grid.
template <class Update>
OracleTrajectory walk(const BrownianDriver& driver, const TimeGrid& grid, Update&& update) {
  const int agg = aggregation_factor(grid, driver);
  OracleTrajectory tr;
  Vector db(driver.dim());
  tr.times.push_back(0.0);
  tr.states.push_back(update(-1, db));
  for (long k = 0; k < grid.steps; ++k) {
    Vector x;
    for (int j = 0; j < agg; ++j) {
      const long fine = k * agg + j;
      driver.fine_increment(static_cast<std::uint64_t>(fine), db);
      x = update(fine, db);
    }
    tr.times.push_back(grid.time(k + 1));
    tr.states.push_back(x);
  }
  return tr;
}

VectorFieldSystem identity_noise(std::shared_ptr<const ManifoldModel> model, int n, double drift_rate) {
  VectorFieldSystem::DriftFn a;
  VectorFieldSystem::DriftJacobianFn da;
  if (drift_rate != 0.0) {
    a = [drift_rate](const Vector& x, Vector& out) { out = drift_rate * x; };
    da = [drift_rate](const Vector&, const Vector& v, Vector& out) { out = drift_rate * v; };
  }
  VectorFieldSystem s(std::move(model), n, Calculus::Stratonovich,
                      [n](const Vector&, Matrix& out) { out.setIdentity(n, n); }, a,
                      [n](const Vector&, const Vector&, Matrix& out) { out.setZero(n, n); }, da);
  return s.with_structure(true, true);
}

OracleFn translation_oracle() {
  return [](const Vector& x0, const BrownianDriver& driver, const TimeGrid& grid) {
    Vector x = x0;
    return walk(driver, grid, [&](long fine, const Vector& db) {
      if (fine >= 0) x += db;
      return x;
    });
  };
}

Scenario translation(int n) {
  auto model = std::make_shared<const ManifoldModel>(ManifoldModel::flat(n));
  Scenario s = make("translation(" + std::to_string(n) + ")", model, identity_noise(model, n, 0.0), Vector::Zero(n));
  s.oracle = translation_oracle();
  s.expected_verdicts = all_of(kC);
  s.notes = "dx = dB on R^n; F_t(x) = x + B_t";
  return s;
}

Scenario punctured_translation(int n) {
  Vector origin = Vector::Zero(n);
  auto model = std::make_shared<const ManifoldModel>(ManifoldModel::punctured_flat(n, origin));
  Vector x0 = Vector::Zero(n);
  x0[0] = 1.0;
  Scenario s = make("punctured_translation(" + std::to_string(n) + ")", model, identity_noise(model, n, 0.0), x0);
  s.oracle = translation_oracle();
  s.expected_verdicts = all_of(kNA);
  s.notes = "dx = dB on R^n minus the origin; complete metric missing, not strongly complete for n = 2";
  return s;
}

Scenario rescaled_punctured_plane() {
  Vector origin = Vector::Zero(2);
  auto model = std::make_shared<const ManifoldModel>(
      ManifoldModel::rescaled_flat(2, [](const Vector& x) { return 1.0 / x.norm(); }, origin));
  Scenario s = make("rescaled_punctured_plane", model, identity_noise(model, 2, 0.0), Vector::Unit(2, 0));
  s.oracle = translation_oracle();
  s.expected_verdicts = all_of(kNA);
  s.notes = "dx = dB on R^2 minus 0 with |v|# = |v| / |x|; complete, sup_K E|T_xF_t|# finite, not strongly 1-complete";
  return s;
}

Scenario inversion_plane() {
  auto model = std::make_shared<const ManifoldModel>(ManifoldModel::flat(2));
  auto x = [](const Vector& p, Matrix& out) {
    const double a = p[0], b = p[1];
    out.resize(2, 2);
    out << b * b - a * a, 2 * a * b, -2 * a * b, b * b - a * a;
  };
  auto dx = [](const Vector& p, const Vector& v, Matrix& out) {
    const double a = p[0], b = p[1];
    const double da = -2 * a * v[0] + 2 * b * v[1];  // d(y^2 - x^2)
    const double dab = 2 * (b * v[0] + a * v[1]);     // d(2xy)
    out.resize(2, 2);
    out << da, dab, -dab, da;
  };
  VectorFieldSystem sys(model, 2, Calculus::Stratonovich, x, {}, dx, {});
  Scenario s = make("inversion_plane", model, sys, Vector::Unit(2, 0));
  s.default_t = 0.5;
  s.oracle = [](const Vector& x0, const BrownianDriver& driver, const TimeGrid& grid) {
    const std::complex<double> w0(x0[0], x0[1]);
    std::complex<double> b(0.0, 0.0);
    double min_den = 1.0;
    auto tr = walk(driver, grid, [&](long fine, const Vector& db) {
      if (fine >= 0) b += std::complex<double>(db[0], db[1]);
      const std::complex<double> den = 1.0 + w0 * b;
      min_den = std::min(min_den, std::abs(den));
      const std::complex<double> w = w0 / den;
      Vector out(2);
      out << w.real(), w.imag();
      return out;
    });
    tr.min_denominator = min_den;
    tr.singular = min_den < kInversionSingularThreshold;
    return tr;
  };
  s.expected_verdicts = {{"Thm5.1", kS},  {"Cor5.2", kF},  {"Thm5.3", kF},  {"Thm6.2", kF},
                         {"Cor6.3", kF},  {"Thm7.1", kF},  {"Prop7.2", kF}, {"Thm8.1", kNA},
                         {"Thm8.2", kNA}, {"Cor8.3", kNA}, {"Diffeo", kS}};
  s.notes = "X(x,y) = [[y^2-x^2, 2xy], [-2xy, y^2-x^2]], A = 0; F_t(z) = z / (1 + z B_t) with complex B";
  return s;
}

Scenario ou(int n) {
  auto model = std::make_shared<const ManifoldModel>(ManifoldModel::flat(n));
  Vector x0 = Vector::Zero(n);
  x0[0] = 1.0;
  Scenario s = make("ou(" + std::to_string(n) + ")", model, identity_noise(model, n, -1.0), x0);
  s.oracle = [](const Vector& x0, const BrownianDriver& driver, const TimeGrid& grid) {
    // Exact recursion on the fine grid: x' = e^{-h} x + I with I jointly
    // Gaussian with the increment, Cov(I, dB) = 1 - e^{-h}, Var I = (1 - e^{-2h}) / 2.
    const double h = driver.fine_dt();
    const double decay = std::exp(-h);
    const double cov = -std::expm1(-h);
    const double var = -0.5 * std::expm1(-2.0 * h);
    const double resid = std::sqrt(std::max(0.0, var - cov * cov / h));
    Vector x = x0;
    Vector aux(driver.dim());
    return walk(driver, grid, [&](long fine, const Vector& db) {
      if (fine < 0) return x;
      if (driver.is_zero()) aux.setZero();
      else driver.auxiliary_normals(static_cast<std::uint64_t>(fine), aux);
      x = decay * x + (cov / h) * db + resid * aux;
      return x;
    });
  };
  s.expected_verdicts = all_of(kC);
  s.notes = "dx = dB - x dt; T_xF_t = e^{-t} Id";
  return s;
}

Scenario kunita() {
  auto model = std::make_shared<const ManifoldModel>(ManifoldModel::flat(2));
  auto x = [](const Vector& p, Matrix& out) {
    out.setZero(2, 2);
    out(0, 0) = p[1];
    out(1, 1) = 0.5 * p[0] * p[0];
  };
  auto dx = [](const Vector& p, const Vector& v, Matrix& out) {
    out.setZero(2, 2);
    out(0, 0) = v[1];
    out(1, 1) = p[0] * v[0];
  };
  VectorFieldSystem sys(model, 2, Calculus::Ito, x, {}, dx, {});
  Scenario s = make("kunita", model, sys, Vector::Unit(2, 0));
  s.default_t = 0.5;
  s.warning = "moments of the derivative flow blow up quickly; horizon capped at t = 0.5 by default";
  s.expected_verdicts = {{"Thm5.1", kS},  {"Cor5.2", kF},  {"Thm5.3", kF},  {"Thm6.2", kF},
                         {"Cor6.3", kF},  {"Thm7.1", kF},  {"Prop7.2", kF}, {"Thm8.1", kNA},
                         {"Thm8.2", kNA}, {"Cor8.3", kNA}, {"Diffeo", kS}};
  s.notes = "Itô dx = y dB1, dy = x^2/2 dB2; stochastically complete, not strongly complete";
  return s;
}

Scenario sphere(int n) {
  if (n < 2) throw ContractError("sphere(n) needs n >= 2");
  auto model = std::make_shared<const ManifoldModel>(
      ManifoldModel::embedded(std::make_shared<const SphereEmbedding>(n)));
  Scenario s = make("sphere(" + std::to_string(n) + ")", model, gradient_brownian_from_embedding(model),
                    Vector::Unit(n, n - 1));
  s.expected_verdicts = {{"Thm5.1", kC},  {"Cor5.2", kC},  {"Thm5.3", kC}, {"Thm6.2", kNA},
                         {"Cor6.3", kNA}, {"Thm7.1", kNA}, {"Prop7.2", kNA}, {"Thm8.1", kC},
                         {"Thm8.2", kC},  {"Cor8.3", kC},  {"Diffeo", kC}};
  s.notes = "gradient Brownian system X(x)e = P(x)e on the unit sphere in R^n; H_p = p + 1 - n";
  return s;
}

Scenario paraboloid() {
  auto model = std::make_shared<const ManifoldModel>(
      ManifoldModel::embedded(std::make_shared<const ParaboloidEmbedding>()));
  Scenario s = make("paraboloid", model, gradient_brownian_from_embedding(model), Vector::Zero(3));
  s.expected_verdicts = {{"Thm5.1", kC},  {"Cor5.2", kC},  {"Thm5.3", kC}, {"Thm6.2", kNA},
                         {"Cor6.3", kNA}, {"Thm7.1", kNA}, {"Prop7.2", kNA}, {"Thm8.1", kC},
                         {"Thm8.2", kS},  {"Cor8.3", kS},  {"Diffeo", kC}};
  s.notes = "gradient Brownian system on z = (x^2 + y^2) / 2; radial conditions use the ambient distance";
  return s;
}

Scenario linear(const Matrix& m) {
  if (m.rows() != m.cols() || m.rows() < 1) throw ContractError("linear(M) needs a square matrix");
  const int n = static_cast<int>(m.rows());
  auto model = std::make_shared<const ManifoldModel>(ManifoldModel::flat(n));
  VectorFieldSystem sys(
      model, 1, Calculus::Stratonovich, [](const Vector& x, Matrix& out) { out = sigma * x; },
      [m](const Vector& x, Vector& out) { out.noalias() = m * x; },
      [](const Vector&, const Vector& v, Matrix& out) { out = sigma * v; },
      [m](const Vector&, const Vector& v, Vector& out) { out.noalias() = m * v; });
  std::ostringstream name;
  if (n == 1) {
    name << "linear(" << nlohmann::json(m(0, 0)).dump() << ")";
  } else {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < n; ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (int j = 0; j < n; ++j) row.push_back(m(i, j));
      rows.push_back(row);
    }
    name << "linear(" << rows.dump() << ")";
  }
  Scenario s = make(name.str(), model, sys, Vector::Ones(n));
  s.oracle = [m](const Vector& x0, const BrownianDriver& driver, const TimeGrid& grid) {
    double b = 0.0;
    double t = 0.0;
    return walk(driver, grid, [&](long fine, const Vector& db) -> Vector {
      if (fine >= 0) {
        b += db[0];
        t = static_cast<double>(fine + 1) * driver.fine_dt();
      }
      const Matrix e = (m * t).exp();
      return std::exp(sigma * b) * (e * x0);
    });
  };
  s.notes = "dx = sigma x o dB + M x dt with sigma = 1/2; F_t(x) = exp(sigma B_t) exp(M t) x";
  return s;
}

int int_arg(const std::string& args, int fallback, const std::string& name) {
  if (args.empty()) return fallback;
  try {
    std::size_t pos = 0;
    const int v = std::stoi(args, &pos);
    if (pos != args.size() || v < 1) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ContractError("bad argument '" + args + "' for " + name);
  }
}

Matrix matrix_arg(const std::string& args) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(args);
  } catch (const std::exception&) {
    throw ContractError("linear(M): M must be a number or a JSON matrix, got '" + args + "'");
  }
  if (j.is_number()) return Matrix::Constant(1, 1, j.get<double>());
  if (!j.is_array() || j.empty()) throw ContractError("linear(M): M must be a non-empty square matrix");
  const auto n = static_cast<int>(j.size());
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<int>(row.size()) != n) throw ContractError("linear(M): M must be square");
    for (int k = 0; k < n; ++k) {
      if (!row[static_cast<std::size_t>(k)].is_number()) throw ContractError("linear(M): non-numeric entry");
      m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
    }
  }
  return m;
}

}  // namespace

std::vector<std::string> builtin_names() {
  return {"translation(2)", "punctured_translation(2)", "rescaled_punctured_plane", "inversion_plane", "ou(1)",
          "kunita", "sphere(3)", "paraboloid", "linear(-1)"};
}

Scenario builtin(const std::string& spec) {
  static const std::regex re(R"(^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$)");
  std::smatch m;
  if (!std::regex_match(spec, m, re)) throw ContractError("malformed scenario name '" + spec + "'");
  const std::string name = m[1];
  const std::string args = m[2];
  auto no_args = [&] {
    if (!args.empty()) throw ContractError(name + " takes no arguments");
  };
  if (name == "translation") return translation(int_arg(args, 2, name));
  if (name == "punctured_translation") return punctured_translation(int_arg(args, 2, name));
  if (name == "rescaled_punctured_plane") return no_args(), rescaled_punctured_plane();
  if (name == "inversion_plane") return no_args(), inversion_plane();
  if (name == "ou") return ou(int_arg(args, 1, name));
  if (name == "kunita") return no_args(), kunita();
  if (name == "sphere") return sphere(int_arg(args, 3, name));
  if (name == "paraboloid") return no_args(), paraboloid();
  if (name == "linear") {
    if (args.empty()) throw ContractError("linear(M) needs a matrix argument");
    return linear(matrix_arg(args));
  }
  throw ContractError("unknown scenario '" + name + "'");
}

OracleTrajectory oracle_flow(const Scenario& scenario, const Vector& x0, const BrownianDriver& driver,
                             const TimeGrid& grid) {
  if (!scenario.oracle) throw CapabilityError("scenario " + scenario.name + " has no closed-form solution");
  if (x0.size() != scenario.system.dim()) throw ContractError("x0 has the wrong dimension");
  return scenario.oracle(x0, driver, grid);
}

}  // namespace flowlab
