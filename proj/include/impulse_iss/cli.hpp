#pragma once

// Subcommand orchestration behind the impulse-iss CLI.
// Exit codes: 0 = pass, 1 = checked-and-failed (witness in the report),
// 2 = misconfiguration or error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "impulse_iss/config.hpp"
#include "impulse_iss/dwell.hpp"
#include "impulse_iss/estimate.hpp"
#include "impulse_iss/lyapunov.hpp"
#include "impulse_iss/system.hpp"

namespace impiss {

struct RunReport {
  std::string subcommand;
  std::string config_digest;
  std::uint64_t seed = 42;
  nlohmann::json verdicts = nlohmann::json::object();
  std::vector<std::string> output_files;
  std::string text;  // human-readable report body
  int exit_code = 0;
};

namespace cli_detail {

inline void emit(const RunReport& rep, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  {
    std::ofstream txt(fs::path(out_dir) / "report.txt");
    txt << "subcommand: " << rep.subcommand << "\n"
        << "config: " << rep.config_digest << "\n"
        << "seed: " << rep.seed << "\n"
        << "exit: " << rep.exit_code << "\n\n"
        << rep.text;
  }
  {
    nlohmann::json j;
    j["subcommand"] = rep.subcommand;
    j["config_digest"] = rep.config_digest;
    j["seed"] = rep.seed;
    j["exit_code"] = rep.exit_code;
    j["verdicts"] = rep.verdicts;
    j["output_files"] = rep.output_files;
    std::ofstream js(fs::path(out_dir) / "report.json");
    js << j.dump(2) << "\n";
  }
}

inline ImpulseSequence resolve_sequence(const SimulationSettings& sim,
                                        std::uint64_t seed) {
  if (sim.sequence_file)
    return ImpulseSequence::from_csv(*sim.sequence_file, sim.t0);
  if (sim.sequence_spec)
    return generate_sequence(*sim.sequence_spec, sim.t0, sim.horizon, seed);
  return ImpulseSequence{sim.t0, {}};
}

inline InputSignal resolve_input(const SimulationSettings& sim, int m) {
  if (sim.input) return *sim.input;
  return InputSignal::constant(std::vector<double>(static_cast<std::size_t>(m), 0.0),
                               sim.t0);
}

}  // namespace cli_detail

inline RunReport cmd_simulate(const AnalysisConfig& cfg, std::uint64_t seed,
                              const std::string& out_dir) {
  RunReport rep;
  rep.subcommand = "simulate";
  rep.config_digest = cfg.digest;
  rep.seed = seed;
  const ImpulsiveSystem& sys = cfg.require_system();
  const SimulationSettings& sim = cfg.require_simulation();
  if (sim.x0.empty()) throw ConfigError("simulate needs simulation.x0");

  ImpulseSequence seq = cli_detail::resolve_sequence(sim, seed);
  InputSignal u = cli_detail::resolve_input(sim, sys.input_dim());
  HybridTrajectory traj =
      simulate(sys, sim.x0, sim.t0, u, seq, sim.horizon, sim.step);

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  {
    std::ofstream csv(fs::path(out_dir) / "trajectory.csv");
    traj.to_csv(csv);
    rep.output_files.push_back((fs::path(out_dir) / "trajectory.csv").string());
  }
  {
    std::ofstream csv(fs::path(out_dir) / "sequence.csv");
    seq.to_csv(csv);
    rep.output_files.push_back((fs::path(out_dir) / "sequence.csv").string());
  }
  rep.verdicts["points"] = traj.points.size();
  rep.verdicts["impulses"] = seq.times.size();
  rep.verdicts["diverged"] = traj.blowup_time.has_value();
  if (traj.blowup_time) rep.verdicts["blowup_time"] = *traj.blowup_time;
  std::ostringstream ss;
  ss << "simulated " << traj.points.size() << " points over ["
     << sim.t0 << ", " << sim.horizon << "], " << seq.times.size()
     << " impulses\n";
  if (traj.blowup_time)
    ss << "state diverged at t = " << *traj.blowup_time << "\n";
  rep.text = ss.str();
  rep.exit_code = traj.blowup_time ? 1 : 0;
  cli_detail::emit(rep, out_dir);
  return rep;
}

inline RunReport cmd_check_lyapunov(const AnalysisConfig& cfg,
                                    std::uint64_t seed,
                                    const std::string& out_dir,
                                    std::size_t samples = 10000) {
  RunReport rep;
  rep.subcommand = "check-lyapunov";
  rep.config_digest = cfg.digest;
  rep.seed = seed;
  const ImpulsiveSystem& sys = cfg.require_system();
  const ISSLyapunovCandidate& cand = cfg.require_lyapunov();

  auto pairs =
      make_audit_samples(sys.state_dim(), sys.input_dim(), samples, seed);
  std::vector<std::vector<double>> states;
  states.reserve(pairs.size());
  for (const auto& [x, u] : pairs) states.push_back(x);

  AuditReport sandwich = check_sandwich(cand, states);
  AuditReport implication = check_implication(cand, sys, pairs);

  auto summarize = [](const AuditReport& r, nlohmann::json& out) {
    out["samples"] = r.samples;
    out["violations"] = r.violations.size();
    out["skipped_nonsmooth"] = r.skipped_nonsmooth;
    out["errors"] = r.errors.size();
    out["pass"] = r.pass();
  };
  summarize(sandwich, rep.verdicts["sandwich"]);
  summarize(implication, rep.verdicts["implication"]);

  std::ostringstream ss;
  ss << "sandwich: " << (sandwich.pass() ? "pass" : "FAIL") << " ("
     << sandwich.violations.size() << " violations)\n";
  ss << "implication: " << (implication.pass() ? "pass" : "FAIL") << " ("
     << implication.violations.size() << " violations, "
     << implication.skipped_nonsmooth << " nonsmooth samples skipped)\n";
  if (implication.skip_warning())
    ss << "warning: more than 1% of samples skipped at kinks\n";
  for (const AuditReport* r : {&sandwich, &implication}) {
    for (std::size_t i = 0; i < r->violations.size() && i < 3; ++i) {
      const auto& v = r->violations[i];
      ss << "  violation [" << v.which << "]: lhs=" << v.lhs
         << " rhs=" << v.rhs << "\n";
    }
  }
  rep.text = ss.str();
  rep.exit_code = sandwich.pass() && implication.pass() ? 0 : 1;
  cli_detail::emit(rep, out_dir);
  return rep;
}

inline RunReport cmd_check_fdt(const AnalysisConfig& cfg, std::uint64_t seed,
                               const std::string& out_dir) {
  RunReport rep;
  rep.subcommand = "check-fdt";
  rep.config_digest = cfg.digest;
  rep.seed = seed;
  const ISSLyapunovCandidate& cand = cfg.require_lyapunov();
  if (!cfg.fdt) throw ConfigError("config has no fdt dwell block");

  DwellTimeReport r = fdt_margin(cand.phi(), cand.alpha(), cfg.fdt->theta,
                                 cfg.fdt->delta);
  rep.verdicts["margin"] = r.margin;
  rep.verdicts["worst_a"] = r.worst_a;
  rep.verdicts["edge_attained"] = r.edge_attained;
  rep.verdicts["pass"] = r.pass();
  std::ostringstream ss;
  ss << "fdt condition (theta=" << cfg.fdt->theta
     << ", delta=" << cfg.fdt->delta << "): "
     << (r.pass() ? "pass" : "FAIL") << ", margin = " << r.margin
     << ", worst a = " << r.worst_a << "\n";
  if (r.edge_attained)
    ss << "note: supremum attained at a grid edge; possibly unbounded toward "
          "the edge\n";
  rep.text = ss.str();
  rep.exit_code = r.pass() ? 0 : 1;
  cli_detail::emit(rep, out_dir);
  return rep;
}

inline RunReport cmd_check_gadt(const AnalysisConfig& cfg, std::uint64_t seed,
                                const std::string& out_dir) {
  RunReport rep;
  rep.subcommand = "check-gadt";
  rep.config_digest = cfg.digest;
  rep.seed = seed;
  const ISSLyapunovCandidate& cand = cfg.require_lyapunov();
  const SimulationSettings& sim = cfg.require_simulation();
  if (!cfg.gadt) throw ConfigError("config has no gadt dwell block");
  const ExponentialRates rates = cand.exponential_rates();

  ImpulseSequence seq = cli_detail::resolve_sequence(sim, seed);
  DwellTimeReport r =
      check_gadt(seq, rates.c, rates.d, *cfg.gadt, sim.horizon);
  rep.verdicts["margin"] = r.margin;
  rep.verdicts["pass"] = r.pass();
  rep.verdicts["constant_h_mode"] = r.constant_h_mode;
  if (r.worst_pair.first >= 0) {
    rep.verdicts["worst_pair"] = {r.worst_pair.first, r.worst_pair.second};
  } else if (!std::isnan(r.worst_gap)) {
    rep.verdicts["worst_gap"] = r.worst_gap;
  }
  std::ostringstream ss;
  ss << "gadt condition (mu=" << cfg.gadt->mu << ", lambda=" << cfg.gadt->lambda
     << "): " << (r.pass() ? "pass" : "FAIL") << ", margin = " << r.margin
     << "\n";
  if (r.worst_pair.first >= 0)
    ss << "worst window: impulses " << r.worst_pair.first << ".."
       << r.worst_pair.second << "\n";
  if (r.constant_h_mode)
    ss << "note: lambda = 0 (constant-h compatibility mode, no class-L "
          "bound)\n";
  rep.text = ss.str();
  rep.exit_code = r.pass() ? 0 : 1;
  cli_detail::emit(rep, out_dir);
  return rep;
}

namespace cli_detail {

inline BetaGamma build_bound(const AnalysisConfig& cfg) {
  const ISSLyapunovCandidate& cand = cfg.require_lyapunov();
  if (cfg.fdt) {
    DwellTimeReport r = fdt_margin(cand.phi(), cand.alpha(), cfg.fdt->theta,
                                   cfg.fdt->delta);
    if (!r.pass())
      throw ConfigError("fdt dwell-time condition fails; no certificate");
    return build_fdt(cand, cfg.fdt->theta, cfg.fdt->delta);
  }
  if (cfg.gadt) return build_beta_gamma_gadt(cand, *cfg.gadt);
  throw ConfigError("config has no dwell block");
}

inline std::function<bool(const ImpulseSequence&)> admissibility(
    const AnalysisConfig& cfg, double horizon) {
  if (cfg.fdt) {
    const double theta = cfg.fdt->theta;
    return [theta](const ImpulseSequence& s) {
      return s.times.empty() || s.min_gap() >= theta - 1e-9;
    };
  }
  const GADTEnvelope env = *cfg.gadt;
  const ExponentialRates rates = cfg.require_lyapunov().exponential_rates();
  return [env, rates, horizon](const ImpulseSequence& s) {
    return check_gadt(s, rates.c, rates.d, env, horizon).pass();
  };
}

}  // namespace cli_detail

// Construct beta/gamma and tabulate them (no trials).
inline RunReport cmd_estimate(const AnalysisConfig& cfg, std::uint64_t seed,
                              const std::string& out_dir) {
  RunReport rep;
  rep.subcommand = "estimate";
  rep.config_digest = cfg.digest;
  rep.seed = seed;
  BetaGamma bg = cli_detail::build_bound(cfg);

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const std::string path = (fs::path(out_dir) / "estimate.csv").string();
  {
    std::ofstream csv(path);
    csv << "r,t,beta,gamma\n" << std::setprecision(17);
    for (double r : {0.1, 0.5, 1.0, 2.0, 5.0})
      for (double t : {0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0})
        csv << r << "," << t << "," << bg.beta(r, t) << "," << bg.gamma(r)
            << "\n";
  }
  rep.output_files.push_back(path);
  rep.verdicts["provenance"] =
      bg.provenance == BetaGamma::Provenance::FDT ? "fdt" : "gadt";
  std::ostringstream ss;
  ss << "constructed beta/gamma ("
     << (bg.provenance == BetaGamma::Provenance::FDT ? "fdt" : "gadt")
     << "); sample values in estimate.csv\n";
  ss << "gamma(1) = " << bg.gamma(1.0) << ", beta(1, 0) = " << bg.beta(1.0, 0.0)
     << ", beta(1, 10) = " << bg.beta(1.0, 10.0) << "\n";
  rep.text = ss.str();
  rep.exit_code = 0;
  cli_detail::emit(rep, out_dir);
  return rep;
}

inline RunReport cmd_falsify(const AnalysisConfig& cfg, std::uint64_t seed,
                             const std::string& out_dir) {
  RunReport rep;
  rep.subcommand = "falsify";
  rep.config_digest = cfg.digest;
  rep.seed = seed;
  const ImpulsiveSystem& sys = cfg.require_system();
  const ISSLyapunovCandidate& cand = cfg.require_lyapunov();
  if (!cfg.falsification) throw ConfigError("config has no falsification block");
  const FalsificationSettings& f = *cfg.falsification;

  BetaGamma bg = cli_detail::build_bound(cfg);
  TrialRanges ranges;
  ranges.x0_max = f.x0_max;
  ranges.u_max = f.u_max;
  ranges.horizon = f.horizon;
  ranges.step = f.step;
  ranges.input_segments = f.input_segments;
  ranges.sequences = f.sequences;
  if (ranges.sequences.empty())
    throw ConfigError("falsification needs at least one sequence spec");

  ISSCheckReport r =
      check_iss_bound(sys, cand, bg, f.trials, ranges, seed,
                      cli_detail::admissibility(cfg, f.horizon));

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const std::string path = (fs::path(out_dir) / "trials.csv").string();
  {
    std::ofstream csv(path);
    r.to_csv(csv);
  }
  rep.output_files.push_back(path);
  rep.verdicts["trials"] = r.trials;
  rep.verdicts["violations"] = r.violation_count();
  rep.verdicts["pass"] = r.pass();
  double worst = 0.0;
  for (const auto& t : r.results) worst = std::max(worst, t.max_ratio);
  rep.verdicts["worst_ratio"] = worst;
  std::ostringstream ss;
  ss << "falsification: " << r.trials << " trials, " << r.violation_count()
     << " violations, worst ratio " << worst << " -> "
     << (r.pass() ? "bound holds" : "BOUND FALSIFIED") << "\n";
  rep.text = ss.str();
  rep.exit_code = r.pass() ? 0 : 1;
  cli_detail::emit(rep, out_dir);
  return rep;
}

// Reference reproductions of the worked examples.
inline RunReport cmd_reproduce(const std::string& name, std::uint64_t seed,
                               const std::string& out_dir) {
  RunReport rep;
  rep.subcommand = "reproduce " + name;
  rep.seed = seed;
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::ostringstream ss;

  auto cubic_rates = [](double a0) {
    std::ostringstream phi, alpha;
    phi.precision(17);
    alpha.precision(17);
    phi << "(" << 1.0 - a0 << ") * s^3";
    alpha << "s + (" << 1.0 + a0 << ") * s^3";
    return std::make_pair(
        MonotoneFunction::parse(phi.str(), FunClass::PD),
        MonotoneFunction::parse(alpha.str(), FunClass::PD));
  };

  if (name == "example_fdt") {
    const std::string path = (fs::path(out_dir) / "example_fdt.csv").string();
    std::ofstream csv(path);
    csv << "a0,sup_numeric,sup_analytic\n" << std::setprecision(12);
    ss << "a0        sup(numeric)  (1+a0)/(1-a0)\n";
    bool ok = true;
    for (double a0 : {0.05, 0.1, 0.2, 1.0 / 3.0, 0.5}) {
      auto [phi, alpha] = cubic_rates(a0);
      const double analytic = (1.0 + a0) / (1.0 - a0);
      DwellTimeReport r = fdt_margin(phi, alpha, analytic + 1.0, 0.5);
      const double sup = (analytic + 1.0 - 0.5) - r.margin;
      csv << a0 << "," << sup << "," << analytic << "\n";
      ss << a0 << "  " << sup << "  " << analytic << "\n";
      if (std::fabs(sup - analytic) > 0.01 * analytic) ok = false;
    }
    rep.output_files.push_back(path);
    rep.verdicts["match_within_1pct"] = ok;
    rep.exit_code = ok ? 0 : 1;
  } else if (name == "example_tradeoff") {
    // smaller admissible theta <-> larger Lyapunov gain chi(1) = (1/a0)^{1/3}
    const std::string path =
        (fs::path(out_dir) / "example_tradeoff.csv").string();
    std::ofstream csv(path);
    csv << "a0,theta_admissible,gain_at_1\n" << std::setprecision(12);
    ss << "a0        theta         chi(1)\n";
    const double delta = 0.1;
    double prev_theta = 0.0, prev_gain = 1e308;
    bool monotone = true;
    for (double a0 : {0.05, 0.1, 0.2, 1.0 / 3.0, 0.5}) {
      auto [phi, alpha] = cubic_rates(a0);
      const double analytic = (1.0 + a0) / (1.0 - a0);
      DwellTimeReport r = fdt_margin(phi, alpha, analytic + 1.0, delta);
      const double sup = (analytic + 1.0 - delta) - r.margin;
      const double theta = sup + delta;
      const double gain = std::cbrt(1.0 / a0);
      csv << a0 << "," << theta << "," << gain << "\n";
      ss << a0 << "  " << theta << "  " << gain << "\n";
      if (theta < prev_theta || gain > prev_gain) {
        // theta grows with a0 while the gain shrinks
      } else {
        monotone = monotone && theta >= prev_theta && gain <= prev_gain;
      }
      prev_theta = theta;
      prev_gain = gain;
    }
    rep.output_files.push_back(path);
    rep.verdicts["tradeoff_monotone"] = monotone;
    rep.exit_code = monotone ? 0 : 1;
  } else if (name == "tightness") {
    // x' = -c x, jump e^{-d} with c = 1, d = -0.5: stability boundary at
    // tau = -d / c = 0.5
    ImpulsiveSystem sys = ImpulsiveSystem::parse(
        1, 1, {"-x1"}, {"exp(0.5) * x1"});
    InputSignal u0 = InputSignal::constant({0.0});
    bool ok = true;
    for (double tau : {0.4, 0.6}) {
      ImpulseSequence seq =
          generate_sequence(SequenceSpec::periodic(tau), 0.0, 60.0, seed);
      HybridTrajectory traj = simulate(sys, {1.0}, 0.0, u0, seq, 60.0, 1e-3);
      std::ostringstream fname;
      fname << "tightness_tau" << tau << ".csv";
      const std::string path = (fs::path(out_dir) / fname.str()).string();
      std::ofstream csv(path);
      traj.to_csv(csv);
      rep.output_files.push_back(path);
      const double final_abs = std::fabs(traj.final_state()[0]);
      const double max_abs = traj.max_norm();
      ss << "tau = " << tau << ": max |x| = " << max_abs
         << ", final |x| = " << final_abs << "\n";
      if (tau < 0.5)
        ok = ok && max_abs > 1e6;
      else
        ok = ok && final_abs < 1e-3;
      // gADT rejects the diverging period for every envelope in the sweep
      if (tau < 0.5) {
        bool rejected_all = true;
        for (double lambda = 0.1; lambda <= 1.0; lambda += 0.1)
          for (double mu = 0.0; mu <= 2.0; mu += 0.25)
            if (check_gadt(seq, 1.0, -0.5, {mu, lambda}, 60.0).pass())
              rejected_all = false;
        ss << "gadt envelope sweep rejects tau = " << tau << ": "
           << (rejected_all ? "yes" : "NO") << "\n";
        ok = ok && rejected_all;
      }
    }
    rep.verdicts["boundary_demonstrated"] = ok;
    rep.exit_code = ok ? 0 : 1;
  } else {
    throw ConfigError("unknown reproduction '" + name + "'");
  }
  rep.text = ss.str();
  cli_detail::emit(rep, out_dir);
  return rep;
}

}  // namespace impiss
