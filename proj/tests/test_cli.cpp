#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>

#include "impulse_iss/cli.hpp"
#include "impulse_iss/config.hpp"

using namespace impiss;
namespace fs = std::filesystem;

namespace {

// cubic benchmark: x' = -x^3 + u with jump x + x^3 + u, certified by V = |x|
const char* kCubicConfig = R"json({
  "system": {
    "state_dim": 1,
    "input_dim": 1,
    "flow": ["-x1^3 + u1"],
    "jump": ["x1 + x1^3 + u1"]
  },
  "lyapunov": {
    "V": "abs(x1)",
    "psi1": "r",
    "psi2": "r",
    "chi": "(3 * r)^(1/3)",
    "kind": "general",
    "phi": "0.66666666666666663 * s^3",
    "alpha": "s + 1.3333333333333333 * s^3"
  },
  "dwell": {"type": "fdt", "theta": 2.3, "delta": 0.2},
  "simulation": {
    "t0": 0.0,
    "horizon": 10.0,
    "step": 0.001,
    "x0": [1.0],
    "sequence": {"kind": "periodic", "tau": 2.5}
  },
  "falsification": {
    "trials": 10,
    "x0_max": 1.5,
    "u_max": 0.5,
    "horizon": 5.0,
    "step": 0.01,
    "input_segments": 4,
    "seed": 42,
    "sequences": [{"kind": "periodic", "tau": 2.3},
                  {"kind": "jittered", "theta": 2.3, "extra_max": 1.0}]
  }
})json";

std::string fresh_dir(const std::string& tag) {
  static int counter = 0;
  fs::path p = fs::temp_directory_path() /
               ("impiss_test_" + tag + "_" + std::to_string(counter++));
  fs::remove_all(p);
  return p.string();
}

}  // namespace

TEST_CASE("config loads the cubic benchmark") {
  AnalysisConfig cfg = load_config_from_string(kCubicConfig);
  REQUIRE(cfg.system.has_value());
  CHECK(cfg.system->state_dim() == 1);
  CHECK(cfg.system->input_dim() == 1);
  REQUIRE(cfg.lyapunov.has_value());
  CHECK_FALSE(cfg.lyapunov->is_exponential());
  CHECK_THAT(cfg.lyapunov->chi()(9.0), Catch::Matchers::WithinRel(3.0, 1e-12));
  REQUIRE(cfg.fdt.has_value());
  CHECK(cfg.fdt->theta == 2.3);
  REQUIRE(cfg.simulation.has_value());
  CHECK(cfg.simulation->x0 == std::vector<double>{1.0});
  REQUIRE(cfg.falsification.has_value());
  CHECK(cfg.falsification->sequences.size() == 2);
  CHECK_FALSE(cfg.digest.empty());
}

TEST_CASE("config digest is deterministic and content-sensitive") {
  AnalysisConfig a = load_config_from_string(kCubicConfig);
  AnalysisConfig b = load_config_from_string(kCubicConfig);
  CHECK(a.digest == b.digest);
  std::string other(kCubicConfig);
  other.replace(other.find("2.3"), 3, "2.4");
  CHECK(a.digest != load_config_from_string(other).digest);
}

TEST_CASE("config rejects malformed inputs") {
  CHECK_THROWS_AS(load_config_from_string(""), ConfigError);
  CHECK_THROWS_AS(load_config_from_string("not json"), ConfigError);
  // out-of-range state variable
  CHECK_THROWS_AS(load_config_from_string(R"json({
    "system": {"state_dim": 1, "input_dim": 1,
               "flow": ["-x3"], "jump": ["x1"]}})json"),
                  ConfigError);
  // V may not reference inputs
  CHECK_THROWS_AS(load_config_from_string(R"json({
    "system": {"state_dim": 1, "input_dim": 1,
               "flow": ["-x1"], "jump": ["x1"]},
    "lyapunov": {"V": "abs(u1)", "psi1": "r", "psi2": "r", "chi": "r",
                 "kind": "general", "phi": "s", "alpha": "s"}})json"),
                  ConfigError);
  // dimension mismatch between flow list and state_dim
  CHECK_THROWS_AS(load_config_from_string(R"json({
    "system": {"state_dim": 2, "input_dim": 1,
               "flow": ["-x1"], "jump": ["x1", "x2"]}})json"),
                  ConfigError);
  // syntax error in an expression
  CHECK_THROWS_AS(load_config_from_string(R"json({
    "system": {"state_dim": 1, "input_dim": 1,
               "flow": ["-x1 + * u1"], "jump": ["x1"]}})json"),
                  ConfigError);
  // invalid dwell parameters
  CHECK_THROWS_AS(load_config_from_string(R"json({
    "dwell": {"type": "fdt", "theta": -1.0, "delta": 0.2}})json"),
                  ConfigError);
  CHECK_THROWS_AS(load_config_from_string(R"json({
    "dwell": {"type": "weekly"}})json"),
                  ConfigError);
  // unknown sequence kind
  CHECK_THROWS_AS(load_config_from_string(R"json({
    "simulation": {"horizon": 1.0, "sequence": {"kind": "fibonacci"}}})json"),
                  ConfigError);
}

TEST_CASE("missing blocks surface as ConfigError") {
  AnalysisConfig empty = load_config_from_string("{}");
  CHECK_THROWS_AS(empty.require_system(), ConfigError);
  CHECK_THROWS_AS(empty.require_lyapunov(), ConfigError);
  CHECK_THROWS_AS(empty.require_simulation(), ConfigError);
  CHECK_THROWS_AS(cmd_check_fdt(empty, 1, fresh_dir("nofdt")), ConfigError);
}

TEST_CASE("simulate writes trajectory, sequence, and reports") {
  AnalysisConfig cfg = load_config_from_string(kCubicConfig);
  const std::string out = fresh_dir("sim");
  RunReport rep = cmd_simulate(cfg, 1, out);
  CHECK(rep.exit_code == 0);
  CHECK(fs::exists(fs::path(out) / "trajectory.csv"));
  CHECK(fs::exists(fs::path(out) / "sequence.csv"));
  CHECK(fs::exists(fs::path(out) / "report.txt"));
  CHECK(fs::exists(fs::path(out) / "report.json"));

  std::ifstream csv(fs::path(out) / "trajectory.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "t,x1,pre_jump");

  std::ifstream js(fs::path(out) / "report.json");
  nlohmann::json j;
  js >> j;
  CHECK(j["subcommand"] == "simulate");
  CHECK(j["exit_code"] == 0);
  CHECK(j["verdicts"]["diverged"] == false);
  CHECK(j["verdicts"]["impulses"] == 4);  // 2.5, 5, 7.5, 10 within [0, 10]
}

TEST_CASE("simulate reports divergence with exit code 1") {
  AnalysisConfig cfg = load_config_from_string(R"json({
    "system": {"state_dim": 1, "input_dim": 1,
               "flow": ["x1^3"], "jump": ["x1"]},
    "simulation": {"horizon": 5.0, "step": 0.001, "x0": [2.0]}})json");
  RunReport rep = cmd_simulate(cfg, 1, fresh_dir("blowup"));
  CHECK(rep.exit_code == 1);
  CHECK(rep.verdicts["diverged"] == true);
}

TEST_CASE("check-lyapunov passes the cubic certificate") {
  AnalysisConfig cfg = load_config_from_string(kCubicConfig);
  RunReport rep = cmd_check_lyapunov(cfg, 42, fresh_dir("lyap"), 2000);
  CHECK(rep.exit_code == 0);
  CHECK(rep.verdicts["sandwich"]["pass"] == true);
  CHECK(rep.verdicts["implication"]["pass"] == true);
}

TEST_CASE("check-lyapunov flags a broken certificate") {
  std::string broken(kCubicConfig);
  // claim a much faster flow decay than the system provides
  broken.replace(broken.find("0.66666666666666663"), 19, "5000.66666666666663");
  AnalysisConfig cfg = load_config_from_string(broken);
  RunReport rep = cmd_check_lyapunov(cfg, 42, fresh_dir("lyapbad"), 2000);
  CHECK(rep.exit_code == 1);
  CHECK(rep.verdicts["implication"]["pass"] == false);
}

TEST_CASE("check-fdt margin for the cubic certificate") {
  AnalysisConfig cfg = load_config_from_string(kCubicConfig);
  RunReport rep = cmd_check_fdt(cfg, 1, fresh_dir("fdt"));
  CHECK(rep.exit_code == 0);
  CHECK_THAT(rep.verdicts["margin"].get<double>(),
             Catch::Matchers::WithinAbs(0.1, 1e-6));

  std::string tight(kCubicConfig);
  tight.replace(tight.find("\"theta\": 2.3"), 12, "\"theta\": 2.1");
  RunReport bad = cmd_check_fdt(load_config_from_string(tight), 1,
                                fresh_dir("fdtbad"));
  CHECK(bad.exit_code == 1);
}

TEST_CASE("check-gadt verdict depends on the configured sequence") {
  const char* base = R"json({
    "system": {"state_dim": 1, "input_dim": 1,
               "flow": ["-x1"], "jump": ["exp(0.5) * x1"]},
    "lyapunov": {"V": "abs(x1)", "psi1": "r", "psi2": "r", "chi": "r",
                 "kind": "exponential", "c": 1.0, "d": -0.5},
    "dwell": {"type": "gadt", "mu": 0.5, "lambda": 0.4},
    "simulation": {"horizon": 30.0, "x0": [1.0],
                   "sequence": {"kind": "periodic", "tau": TAU}}})json";
  auto with_tau = [&](const char* tau) {
    std::string s(base);
    s.replace(s.find("TAU"), 3, tau);
    return load_config_from_string(s);
  };
  CHECK(cmd_check_gadt(with_tau("1.0"), 1, fresh_dir("gadtok")).exit_code == 0);
  CHECK(cmd_check_gadt(with_tau("0.4"), 1, fresh_dir("gadtbad")).exit_code == 1);
}

TEST_CASE("estimate tabulates beta and gamma") {
  AnalysisConfig cfg = load_config_from_string(kCubicConfig);
  const std::string out = fresh_dir("est");
  RunReport rep = cmd_estimate(cfg, 1, out);
  CHECK(rep.exit_code == 0);
  CHECK(rep.verdicts["provenance"] == "fdt");
  std::ifstream csv(fs::path(out) / "estimate.csv");
  REQUIRE(csv.good());
  std::string header;
  std::getline(csv, header);
  CHECK(header == "r,t,beta,gamma");
  int rows = 0;
  std::string line;
  while (std::getline(csv, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 35);
}

TEST_CASE("falsify holds on the cubic benchmark") {
  AnalysisConfig cfg = load_config_from_string(kCubicConfig);
  const std::string out = fresh_dir("falsify");
  RunReport rep = cmd_falsify(cfg, 42, out);
  CHECK(rep.exit_code == 0);
  CHECK(rep.verdicts["pass"] == true);
  CHECK(rep.verdicts["trials"] == 10);
  std::ifstream csv(fs::path(out) / "trials.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "trial,seed,max_ratio,arg_t");
}

TEST_CASE("falsify refuses inadmissible sequence specs") {
  std::string cfg_text(kCubicConfig);
  cfg_text.replace(cfg_text.find("\"tau\": 2.3"), 10, "\"tau\": 0.5");
  AnalysisConfig cfg = load_config_from_string(cfg_text);
  CHECK_THROWS_AS(cmd_falsify(cfg, 42, fresh_dir("inadm")),
                  InadmissibleSequenceError);
}

TEST_CASE("reproduce rejects unknown names") {
  CHECK_THROWS_AS(cmd_reproduce("nonsense", 1, fresh_dir("repro")),
                  ConfigError);
}

TEST_CASE("load_config reads from disk and rejects missing files") {
  const std::string dir = fresh_dir("cfg");
  fs::create_directories(dir);
  const std::string path = (fs::path(dir) / "c.json").string();
  {
    std::ofstream out(path);
    out << kCubicConfig;
  }
  AnalysisConfig cfg = load_config(path);
  CHECK(cfg.system.has_value());
  CHECK_THROWS_AS(load_config(path + ".missing"), ConfigError);
}
