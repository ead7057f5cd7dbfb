// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "flowlab/app.hpp"
#include "flowlab/estimators.hpp"
#include "flowlab/scenarios.hpp"
#include "flowlab/semigroup.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

using namespace flowlab;
using nlohmann::json;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& what, const std::string& measured) {
  if (!pass) ++failures;
  std::printf("%s criterion %d: %s [%s]\n", pass ? "PASS" : "FAIL", id, what.c_str(), measured.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<int>(v.size()));
  int i = 0;
  for (double e : v) out[i++] = e;
  return out;
}

McConfig mc(long paths, std::uint64_t seed, double dt = 1e-3) {
  McConfig c;
  c.paths = paths;
  c.seed = seed;
  c.dt = dt;
  c.workers = 4;
  return c;
}

void criterion1() {
  const auto start = std::chrono::steady_clock::now();
  const RunOutput out = run({{"command", "oracle-test"},
                             {"scenario", "inversion_plane"},
                             {"dt_ladder", {4e-3, 1e-3, 2.5e-4}},
                             {"t", 0.5},
                             {"x0", {1.0, 0.0}},
                             {"paths", 200},
                             {"seed", 1},
                             {"workers", 4}});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const json& r = out.report["result"];
  const double slope = r["slope"].is_number() ? r["slope"].get<double>() : NAN;
  std::string rms;
  for (const auto& row : r["ladder"]) rms += fmt("%g ", row["rms_error"].is_number() ? row["rms_error"].get<double>() : NAN);
  const bool ok = out.exit_code == kExitOk && r["accepted"].get<long>() == 200 && slope >= 0.35 && slope <= 0.65 && secs < 30.0;
  report(1, ok, "inversion oracle, RMS slope in [0.35, 0.65], runtime < 30 s",
         fmt("slope %.4f, rms %s, accepted %ld, rejected singular %ld, %.2f s", slope, rms.c_str(),
             r["accepted"].get<long>(), r["rejected_singular"].get<long>(), secs));
}

void criterion2() {
  double id_err = 0.0;
  {
    const Scenario s = builtin("translation(2)");
    const TimeGrid g = TimeGrid::uniform(1.0, 1e-3);
    for (std::uint32_t path = 0; path < 20; ++path) {
      const BrownianDriver d(2, path, 2, 1e-3);
      for (DerivativeMode mode : {DerivativeMode::Direct, DerivativeMode::LogRadial})
        for (int j = 0; j < 2; ++j) {
          const Vector v0 = Vector::Unit(2, j);
          const Trajectory tr = integrate_derivative_flow(s.system, vec({0.3, -0.2}), v0, g, d, mode);
          for (const auto& v : tr.tangents) id_err = std::max(id_err, (v - v0).norm());
        }
    }
  }
  double ou_err = 0.0;
  {
    const Scenario s = builtin("ou(1)");
    const TimeGrid g = TimeGrid::uniform(1.0, 1e-4);
    for (std::uint32_t path = 0; path < 5; ++path) {
      const BrownianDriver d(2, path, 1, 1e-4);
      const Trajectory tr = integrate_derivative_flow(s.system, vec({0.5}), vec({1.0}), g, d, DerivativeMode::LogRadial);
      for (std::size_t k = 0; k < tr.tangents.size(); ++k)
        ou_err = std::max(ou_err, std::abs(tr.tangents[k].norm() - std::exp(-tr.times[k])));
    }
  }
  report(2, id_err <= 1e-12 && ou_err <= 1e-3, "translation derivative is the identity (1e-12), OU |v_t| = e^-t (1e-3)",
         fmt("identity error %.3g, OU error %.3g", id_err, ou_err));
}

void criterion3() {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  double worst = 0.0;
  for (int n : {3, 4}) {
    const Scenario s = builtin("sphere(" + std::to_string(n) + ")");
    const CurvatureData* cd = s.curvature ? &*s.curvature : nullptr;
    for (int k = 0; k < 100; ++k) {
      Vector x(n), u(n);
      for (int i = 0; i < n; ++i) x[i] = g(rng), u[i] = g(rng);
      x.normalize();
      const Vector v = u - u.dot(x) * x;
      for (double p : {1.0, 2.0, 4.0}) {
        const double expected = (p + 1 - n) * v.squaredNorm();
        for (HpBackend b : {HpBackend::Ricci, HpBackend::Gauss})
          worst = std::max(worst, std::abs(eval_Hp(s.system, cd, x, v, p, b) - expected));
      }
    }
  }
  report(3, worst <= 1e-8, "sphere H_p = (p + 1 - n)|v|^2 on Ricci and Gauss backends (1e-8)", fmt("max error %.3g", worst));
}

void criterion4() {
  const Scenario s = builtin("ou(1)");
  const StoppedMomentResult r =
      estimate_stopped_moment(s.system, {vec({-1.0}), vec({0.0}), vec({1.0})}, {2, 3, 4, 6, 8}, 1.0, mc(10000, 4));
  bool ok = !r.rungs.empty();
  std::string rungs;
  for (std::size_t j = 0; j < r.rungs.size(); ++j) {
    const MomentEstimate& e = r.rungs[j].sup;
    ok = ok && e.valid && e.value <= std::exp(-1.0) * (1.0 + 3.0 * e.std_error);
    rungs += fmt("R=%g: %.4g (SE %.2g) ", r.radii[j], e.value, e.std_error);
  }
  report(4, ok, "OU stopped derivative moments <= e^-1 (1 + 3 SE) on every rung", rungs);
}

void criterion5() {
  const Scenario s = builtin("ou(1)");
  const ConsistencyReport r =
      gradient_consistency_check(s.system, observable_identity(), vec({0.0}), vec({1.0}), 1.0, mc(10000, 5), {1e-2});
  const FiniteDifferenceRung& fd = r.rungs.at(0);
  const double truth = std::exp(-1.0);
  const bool agree = std::abs(fd.discrepancy) <= 3.0 * fd.combined_se;
  const bool fd_near = std::abs(fd.lhs.value - truth) <= 3.0 * fd.lhs.std_error;
  const bool rhs_near = std::abs(r.rhs.value - truth) <= 3.0 * r.rhs.std_error;
  report(5, agree && fd_near && rhs_near,
         "OU d(P_t f) = delta P_t(df): |FD - delta P| <= 3 combined SE, both within 3 SE of e^-1",
         fmt("FD %.12g (SE %.3g), delta P %.12g (SE %.3g), e^-1 %.12g; agree %s, FD near %s, delta P near %s",
             fd.lhs.value, fd.lhs.std_error, r.rhs.value, r.rhs.std_error, truth, agree ? "yes" : "no",
             fd_near ? "yes" : "no", rhs_near ? "yes" : "no"));
}

void criterion6() {
  const Scenario s = builtin("translation(1)");
  const auto f = [](const Vector& x) { return 1.0 + std::log1p(x[0] * x[0]); };
  const ExpFunctionalResult r = estimate_exponential_functional(s.system, f, vec({0.0}), 1.0, 0.05, mc(10000, 6));
  const double combined = std::hypot(r.estimate.std_error, r.jensen.std_error);
  report(6, r.estimate.value <= r.jensen.value + 3.0 * combined, "exponential functional <= Jensen bound + 3 combined SE",
         fmt("estimate %.6g, Jensen %.6g, combined SE %.3g", r.estimate.value, r.jensen.value, combined));
}

void criterion7() {
  const Scenario s = builtin("ou(1)");
  const auto fits =
      estimate_moment_exponent(s.system, {vec({-1.0}), vec({0.0}), vec({1.0})}, {1.0, 2.0}, {1, 2, 3, 4}, mc(10000, 7));
  const double m1 = fits.at(0).slope, m2 = fits.at(1).slope;
  report(7, std::abs(m1 + 1.0) <= 0.05 && std::abs(m2 + 2.0) <= 0.1, "OU moment exponents mu(1) = -1 +- 0.05, mu(2) = -2 +- 0.1",
         fmt("mu(1) %.6f, mu(2) %.6f", m1, m2));
}

void criterion8() {
  std::ifstream in(FLOWLAB_TEST_DIR "/golden/verdicts.json");
  const json golden = in ? json::parse(in) : json::object();
  int mismatches = 0;
  std::string detail;
  for (const auto& name : builtin_names()) {
    const Scenario s = builtin(name);
    CertifyConfig c;
    c.curvature = s.curvature ? &*s.curvature : nullptr;
    const VerdictReport rep = certify(s.system, c);
    for (const auto& e : rep.entries) {
      const bool match = golden.contains(s.name) && golden[s.name].contains(e.theorem) && golden[s.name][e.theorem] == e.status;
      if (!match) {
        ++mismatches;
        detail += s.name + " " + e.theorem + "=" + e.status + " ";
      }
    }
    auto status = [&](const char* id) { return rep.find(id) ? rep.find(id)->status : std::string("missing"); };
    if (name == "ou(1)" || name == "translation(2)") {
      if (status("Cor5.2") != "certified") ++mismatches, detail += name + " Cor5.2 ";
    } else if (name == "sphere(3)") {
      if (status("Thm8.1") != "certified") ++mismatches, detail += "sphere Thm8.1 ";
    } else if (name == "kunita") {
      const VerdictEntry* e = rep.find("Thm6.2");
      if (!e || e->status != "failed" || !e->failing_sample) ++mismatches, detail += "kunita Thm6.2 witness ";
    }
  }
  report(8, mismatches == 0, "verdicts match the golden file; ou/translation Cor5.2, sphere Thm8.1 certified, kunita Thm6.2 failed with witness",
         mismatches == 0 ? std::string("all statuses match") : fmt("%d mismatches: %s", mismatches, detail.c_str()));
}

void criterion9() {
  const Scenario s = builtin("sphere(3)");
  const TimeGrid g = TimeGrid::uniform(1.0, 1e-3);
  double radius_err = 0.0, normal_err = 0.0;
  for (std::uint32_t path = 0; path < 100; ++path) {
    const BrownianDriver d(9, path, s.system.noise_dim(), 1e-3);
    const Trajectory tr = integrate_derivative_flow(s.system, s.default_x0, vec({1.0, 0.0, 0.0}), g, d, DerivativeMode::LogRadial);
    for (std::size_t k = 0; k < tr.states.size(); ++k) {
      radius_err = std::max(radius_err, std::abs(tr.states[k].norm() - 1.0));
      if (k < tr.tangents.size()) normal_err = std::max(normal_err, std::abs(tr.states[k].dot(tr.tangents[k])));
    }
  }
  report(9, radius_err <= 1e-6 && normal_err <= 1e-6, "sphere flow keeps |x| = 1 and <x, v> = 0 (1e-6)",
         fmt("max ||x| - 1| %.3g, max |<x,v>| %.3g", radius_err, normal_err));
}

void criterion10() {
  const std::vector<json> configs = {
      {{"command", "simulate"}, {"scenario", "sphere(3)"}, {"paths", 6}, {"t", 0.2}},
      {{"command", "derivative-moments"}, {"scenario", "linear(-1)"}, {"paths", 300}, {"t", 0.5}},
      {{"command", "stopped-moments"}, {"scenario", "ou(1)"}, {"paths", 300}, {"t", 0.5}},
      {{"command", "exp-functional"}, {"scenario", "translation(1)"}, {"paths", 300}},
      {{"command", "radial"}, {"scenario", "translation(2)"}, {"paths", 300}},
      {{"command", "exponent"}, {"scenario", "ou(1)"}, {"paths", 100}, {"horizons", {0.5, 1.0}}},
      {{"command", "certify"}, {"scenario", "kunita"}},
      {{"command", "hp-scan"}, {"scenario", "paraboloid"}},
      {{"command", "semigroup-check"}, {"scenario", "linear(-1)"}, {"paths", 200}, {"f", "sin(x1)"}, {"t", 0.5}},
      {{"command", "oracle-test"}, {"scenario", "inversion_plane"}, {"paths", 40}},
      {{"command", "list-scenarios"}},
  };
  int differing = 0;
  std::string which;
  for (json c : configs) {
    c["seed"] = 1234;
    c["workers"] = 1;
    const RunOutput a = run(c), b = run(c);
    c["workers"] = 8;
    const RunOutput m = run(c);
    const std::string ra = a.report.dump(2) + a.csv;
    if (ra != b.report.dump(2) + b.csv || ra != m.report.dump(2) + m.csv) {
      ++differing;
      which += c["command"].get<std::string>() + " ";
    }
  }
  report(10, differing == 0, "reports byte-identical across repeated runs and workers 1 vs 8",
         differing == 0 ? fmt("%zu commands identical", configs.size()) : "differs: " + which);
}

void criterion11() {
  const Scenario s = builtin("ou(1)");
  const double truth = std::exp(-1.0);
  int covered = 0;
  double se = 0.0, value = 0.0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const GridEstimate g = estimate_sup_derivative_moment(s.system, {vec({0.0})}, 1.0, 1.0, mc(1000, seed), true);
    if (g.sup.covers(truth)) ++covered;
    se = g.sup.std_error;
    value = g.sup.value;
  }
  report(11, covered >= 90, "95% CI of the OU terminal derivative moment covers e^-1 in >= 90 of 100 seeds",
         fmt("%d of 100 cover; last estimate %.12g (SE %.3g), e^-1 %.12g", covered, value, se, truth));
}

}  // namespace

int main() {
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion5();
  criterion6();
  criterion7();
  criterion8();
  criterion9();
  criterion10();
  criterion11();
  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
