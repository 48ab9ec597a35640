#pragma once

// JSON analysis configuration: system, Lyapunov candidate, dwell-time
// parameters, simulation settings, and falsification settings. Expressions
// are DSL strings and are parsed eagerly so errors surface at load time.

#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "impulse_iss/dwell.hpp"
#include "impulse_iss/estimate.hpp"
#include "impulse_iss/lyapunov.hpp"
#include "impulse_iss/system.hpp"

namespace impiss {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SimulationSettings {
  double t0 = 0.0;
  double horizon = 10.0;
  double step = 1e-3;
  std::vector<double> x0;
  std::optional<InputSignal> input;
  std::optional<SequenceSpec> sequence_spec;
  std::optional<std::string> sequence_file;
};

struct FalsificationSettings {
  int trials = 500;
  double x0_max = 1.0;
  double u_max = 0.0;
  double horizon = 10.0;
  double step = 1e-3;
  int input_segments = 8;
  std::uint64_t seed = 42;
  std::vector<SequenceSpec> sequences;
};

struct AnalysisConfig {
  std::optional<ImpulsiveSystem> system;
  std::optional<ISSLyapunovCandidate> lyapunov;
  std::optional<FDTParams> fdt;
  std::optional<GADTEnvelope> gadt;
  std::optional<SimulationSettings> simulation;
  std::optional<FalsificationSettings> falsification;
  std::string digest;  // FNV-1a of the raw config bytes, hex

  const ImpulsiveSystem& require_system() const {
    if (!system) throw ConfigError("config has no 'system' block");
    return *system;
  }
  const ISSLyapunovCandidate& require_lyapunov() const {
    if (!lyapunov) throw ConfigError("config has no 'lyapunov' block");
    return *lyapunov;
  }
  const SimulationSettings& require_simulation() const {
    if (!simulation) throw ConfigError("config has no 'simulation' block");
    return *simulation;
  }
};

namespace detail {

inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::ostringstream ss;
  ss << std::hex << h;
  return ss.str();
}

inline Expr parse_checked(const std::string& text, int n, int m,
                          const std::string& where,
                          bool states_only = false) {
  Expr e;
  try {
    e = Expr::parse(text);
  } catch (const ParseError& pe) {
    throw ConfigError(where + ": " + pe.what());
  }
  for (const std::string& v : e.vars()) {
    bool ok = false;
    if (v.size() >= 2 && (v[0] == 'x' || v[0] == 'u')) {
      try {
        const int idx = std::stoi(v.substr(1));
        const int lim = v[0] == 'x' ? n : m;
        ok = idx >= 1 && idx <= lim && !(states_only && v[0] == 'u');
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (!ok) throw ConfigError(where + ": unknown variable " + v);
  }
  return e;
}

inline MonotoneFunction parse_monotone(const nlohmann::json& j,
                                       const std::string& key, FunClass cls) {
  if (!j.contains(key)) throw ConfigError("missing expression '" + key + "'");
  try {
    return MonotoneFunction::parse(j.at(key).get<std::string>(), cls);
  } catch (const ParseError& pe) {
    throw ConfigError(key + ": " + pe.what());
  } catch (const std::invalid_argument& ia) {
    throw ConfigError(key + ": " + ia.what());
  }
}

inline SequenceSpec parse_sequence_spec(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "periodic") return SequenceSpec::periodic(j.at("tau"));
  if (kind == "jittered")
    return SequenceSpec::jittered(j.at("theta"), j.at("extra_max"));
  if (kind == "poisson")
    return SequenceSpec::poisson(j.at("rate"), j.at("min_gap"));
  throw ConfigError("unknown sequence kind '" + kind + "'");
}

}  // namespace detail

inline AnalysisConfig load_config_from_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  AnalysisConfig cfg;
  cfg.digest = detail::fnv1a_hex(text);

  int n = 0, m = 0;
  if (j.contains("system")) {
    const auto& js = j.at("system");
    n = js.at("state_dim").get<int>();
    m = js.at("input_dim").get<int>();
    std::vector<std::string> flow_txt =
        js.at("flow").get<std::vector<std::string>>();
    std::vector<std::string> jump_txt =
        js.at("jump").get<std::vector<std::string>>();
    if (static_cast<int>(flow_txt.size()) != n ||
        static_cast<int>(jump_txt.size()) != n)
      throw ConfigError("system needs n flow and n jump expressions");
    std::vector<Expr> flow, jump;
    for (const auto& s : flow_txt)
      flow.push_back(detail::parse_checked(s, n, m, "flow"));
    for (const auto& s : jump_txt)
      jump.push_back(detail::parse_checked(s, n, m, "jump"));
    cfg.system.emplace(n, m, std::move(flow), std::move(jump));
  }

  if (j.contains("lyapunov")) {
    const auto& jl = j.at("lyapunov");
    Expr V = detail::parse_checked(jl.at("V").get<std::string>(), n, m, "V",
                                   /*states_only=*/true);
    MonotoneFunction psi1 = detail::parse_monotone(jl, "psi1", FunClass::Kinf);
    MonotoneFunction psi2 = detail::parse_monotone(jl, "psi2", FunClass::Kinf);
    MonotoneFunction chi = detail::parse_monotone(jl, "chi", FunClass::Kinf);
    const std::string kind = jl.at("kind").get<std::string>();
    std::variant<GeneralRates, ExponentialRates> rates =
        ExponentialRates{};
    if (kind == "general") {
      rates = GeneralRates{detail::parse_monotone(jl, "phi", FunClass::PD),
                           detail::parse_monotone(jl, "alpha", FunClass::PD)};
    } else if (kind == "exponential") {
      rates = ExponentialRates{jl.at("c").get<double>(),
                               jl.at("d").get<double>()};
    } else {
      throw ConfigError("lyapunov kind must be 'general' or 'exponential'");
    }
    cfg.lyapunov.emplace(std::move(V), std::move(psi1), std::move(psi2),
                         std::move(chi), std::move(rates));
  }

  if (j.contains("dwell")) {
    const auto& jd = j.at("dwell");
    const std::string type = jd.at("type").get<std::string>();
    if (type == "fdt") {
      FDTParams p{jd.at("theta").get<double>(), jd.at("delta").get<double>()};
      try {
        p.validate();
      } catch (const std::invalid_argument& ia) {
        throw ConfigError(std::string("dwell: ") + ia.what());
      }
      cfg.fdt = p;
    } else if (type == "gadt") {
      GADTEnvelope e{jd.at("mu").get<double>(), jd.at("lambda").get<double>()};
      try {
        e.validate();
      } catch (const std::invalid_argument& ia) {
        throw ConfigError(std::string("dwell: ") + ia.what());
      }
      cfg.gadt = e;
    } else {
      throw ConfigError("dwell type must be 'fdt' or 'gadt'");
    }
  }

  if (j.contains("simulation")) {
    const auto& js = j.at("simulation");
    SimulationSettings s;
    s.t0 = js.value("t0", 0.0);
    s.horizon = js.at("horizon").get<double>();
    s.step = js.value("step", 1e-3);
    if (js.contains("x0")) s.x0 = js.at("x0").get<std::vector<double>>();
    if (js.contains("input")) {
      const auto& ji = js.at("input");
      s.input.emplace(ji.at("breakpoints").get<std::vector<double>>(),
                      ji.at("values").get<std::vector<std::vector<double>>>());
    }
    if (js.contains("sequence")) {
      const auto& jq = js.at("sequence");
      if (jq.contains("file"))
        s.sequence_file = jq.at("file").get<std::string>();
      else
        s.sequence_spec = detail::parse_sequence_spec(jq);
    }
    if (cfg.system && !s.x0.empty() &&
        static_cast<int>(s.x0.size()) != cfg.system->state_dim())
      throw ConfigError("simulation.x0 dimension mismatch");
    cfg.simulation = std::move(s);
  }

  if (j.contains("falsification")) {
    const auto& jf = j.at("falsification");
    FalsificationSettings f;
    f.trials = jf.value("trials", 500);
    f.x0_max = jf.at("x0_max").get<double>();
    f.u_max = jf.value("u_max", 0.0);
    f.horizon = jf.at("horizon").get<double>();
    f.step = jf.value("step", 1e-3);
    f.input_segments = jf.value("input_segments", 8);
    f.seed = jf.value("seed", 42ull);
    if (jf.contains("sequences"))
      for (const auto& jq : jf.at("sequences"))
        f.sequences.push_back(detail::parse_sequence_spec(jq));
    cfg.falsification = std::move(f);
  }

  return cfg;
}

inline AnalysisConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_config_from_string(ss.str());
}

}  // namespace impiss
