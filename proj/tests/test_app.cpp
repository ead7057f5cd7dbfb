#include "doctest.h"

#include "flowlab/app.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace flowlab;
using nlohmann::json;

namespace {

struct CliResult {
  int code;
  std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "flowlab");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("flowlab_test_app_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
  return p.string();
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("unknown keys are reported with their line") {
  const std::string text = "{\n  \"command\": \"certify\",\n  \"scenario\": \"ou(1)\",\n  \"pathz\": 10\n}\n";
  const json j = parse_config_text(text);
  try {
    validate_config(j, text);
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.line() == 4);
    CHECK(std::string(e.what()).find("pathz") != std::string::npos);
  }
}

TEST_CASE("value types are checked") {
  CHECK_THROWS_AS(validate_config({{"command", "simulate"}, {"paths", -3}}), ConfigError);
  CHECK_THROWS_AS(validate_config({{"command", "simulate"}, {"dt", "small"}}), ConfigError);
  CHECK_THROWS_AS(validate_config({{"command", "stopped-moments"}, {"radii", {3, 2}}}), ConfigError);
  CHECK_THROWS_AS(validate_config({{"command", "teleport"}}), ConfigError);
  CHECK_THROWS_AS(validate_config({{"command", "simulate"}, {"region", {{"dirs", 4}}}}), ConfigError);
  CHECK_NOTHROW(validate_config({{"command", "simulate"}, {"scenario", "ou(1)"}, {"paths", 5}}));
}

TEST_CASE("syntax errors carry line and column") {
  try {
    (void)parse_config_text("{\n  \"a\": 1,\n  \"b\": ]\n}");
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.line() == 3);
    CHECK(e.column() >= 8);
  }
}

TEST_CASE("csv quoting and number formatting") {
  CHECK(csv_field("plain") == "plain");
  CHECK(csv_field("a,b") == "\"a,b\"");
  CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
  CHECK(csv_field("two\nlines") == "\"two\nlines\"");
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(-2.0) == "-2");
  CHECK(format_number(1e-300) == "1e-300");
  CHECK(format_number(std::nan("")) == "nan");
  CHECK(format_number(-INFINITY) == "-inf");
}

TEST_CASE("FNV-1a reference values and hash independence from workers") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  const json base{{"command", "derivative-moments"}, {"scenario", "ou(1)"}, {"paths", 40}, {"t", 0.5}, {"seed", 3}};
  json one = base, many = base;
  one["workers"] = 1;
  many["workers"] = 8;
  const RunOutput a = run(one), b = run(many);
  CHECK(a.report.dump() == b.report.dump());
  CHECK_FALSE(a.report["config"].contains("workers"));
  CHECK(is_presentation_key("workers"));
  CHECK_FALSE(is_presentation_key("seed"));
  json other = base;
  other["seed"] = 4;
  CHECK(run(other).report["config_hash"] != a.report["config_hash"]);
}

TEST_CASE("report layout") {
  const RunOutput r = run({{"command", "certify"}, {"scenario", "ou(1)"}});
  CHECK(r.exit_code == kExitOk);
  CHECK(r.report["schema"] == kReportSchema);
  CHECK(r.report["command"] == "certify");
  CHECK(r.report["config_hash"].get<std::string>().size() == 16);
  CHECK(r.report["result"]["matches_expected"] == true);
  bool found = false;
  for (const auto& e : r.report["result"]["entries"])
    if (e["theorem"] == "Cor5.2") found = e["status"] == "certified";
  CHECK(found);
  CHECK(r.csv.rfind("theorem,status,condition,constant,holds\r\n", 0) == 0);
}

TEST_CASE("simulate is byte-identical across runs") {
  const std::vector<std::string> args{"simulate", "--scenario", "translation(2)", "--seed", "42", "--paths", "3",
                                      "--t", "0.1", "--dt", "0.01", "--format", "csv"};
  const CliResult a = cli(args), b = cli(args);
  CHECK(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out.rfind("path_id,step,time,x1,x2", 0) == 0);
  auto more = args;
  more.insert(more.end(), {"--workers", "8"});
  CHECK(cli(more).out == a.out);
}

TEST_CASE("seed precedence: flag over FLOWLAB_SEED over config") {
  const auto dir = scratch("seed");
  const std::string cfg = write_file(dir / "c.json", R"j({"scenario": "ou(1)", "seed": 5, "paths": 4, "t": 0.1})j");
  auto seed_of = [&](std::vector<std::string> extra) {
    std::vector<std::string> args{"derivative-moments", "--config", cfg};
    args.insert(args.end(), extra.begin(), extra.end());
    const CliResult r = cli(args);
    REQUIRE(r.code == 0);
    return json::parse(r.out)["seed"].get<std::uint64_t>();
  };
  ::unsetenv("FLOWLAB_SEED");
  CHECK(seed_of({}) == 5);
  ::setenv("FLOWLAB_SEED", "77", 1);
  CHECK(seed_of({}) == 77);
  CHECK(seed_of({"--seed", "9"}) == 9);
  ::setenv("FLOWLAB_SEED", "seven", 1);
  CHECK(cli({"derivative-moments", "--config", cfg}).code == kExitValidation);
  ::unsetenv("FLOWLAB_SEED");
}

TEST_CASE("invalid input exits with 2") {
  const auto dir = scratch("bad");
  const std::string cfg = write_file(dir / "bad.json", "{\n  \"scenario\": \"ou(1)\",\n  \"colour\": 1\n}\n");
  const CliResult r = cli({"certify", "--config", cfg});
  CHECK(r.code == kExitValidation);
  CHECK(r.err.find("line 3") != std::string::npos);
  CHECK(cli({"certify", "--scenario", "torus"}).code == kExitValidation);
  CHECK(cli({"certify", "--paths", "-1"}).code == kExitValidation);
  CHECK(cli({"frobnicate"}).code == kExitValidation);
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("custom systems from expressions") {
  const json sys{{"dim", 1}, {"noise_dim", 1}, {"diffusion", {{"1"}}}, {"drift", {"-x"}}};
  const RunOutput r = run({{"command", "hp-scan"}, {"system", sys}, {"backend", "euclidean"}});
  CHECK(r.report["result"]["backends"][0]["max"].get<double>() == doctest::Approx(-2.0).epsilon(1e-6));
  CHECK_THROWS_AS(run({{"command", "hp-scan"}, {"system", sys}, {"scenario", "ou(1)"}}), ConfigError);
  json broken = sys;
  broken["drift"] = {"-x +"};
  CHECK(cli({"certify", "--config", write_file(scratch("expr") / "e.json", json{{"system", broken}}.dump())}).code ==
        kExitValidation);
}

TEST_CASE("--out writes report files") {
  const auto dir = scratch("out");
  const CliResult r = cli({"certify", "--scenario", "kunita", "--out", (dir / "res").string(), "--format", "both"});
  CHECK(r.code == 0);
  CHECK(r.out.empty());
  const json report = json::parse(slurp(dir / "res" / "certify.json"));
  CHECK(report["command"] == "certify");
  CHECK_FALSE(report["config"].contains("out"));
  CHECK(report.contains("warnings"));
  CHECK(slurp(dir / "res" / "certify.csv").find("Thm6.2,failed") != std::string::npos);
}

TEST_CASE("list-scenarios") {
  const RunOutput r = run({{"command", "list-scenarios"}});
  CHECK(r.report["result"]["scenarios"].size() == 9);
}
