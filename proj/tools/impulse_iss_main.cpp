// impulse-iss: simulate impulsive systems, audit ISS-Lyapunov certificates,
// check dwell-time conditions, and validate the resulting ISS estimates.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "impulse_iss/cli.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::uint64_t seed = 42;
  std::string out_dir = ".";
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool needs_config = true) {
  auto* c = cmd->add_option("--config", opts.config_path, "config file (JSON)");
  if (needs_config) c->required();
  cmd->add_option("--seed", opts.seed, "random seed (default 42)");
  cmd->add_option("--out", opts.out_dir, "output directory (default .)");
}

int dispatch(const std::string& name, const CommonOpts& opts,
             const std::string& reproduce_name) {
  using namespace impiss;
  try {
    RunReport rep;
    if (name == "reproduce") {
      rep = cmd_reproduce(reproduce_name, opts.seed, opts.out_dir);
    } else {
      AnalysisConfig cfg = load_config(opts.config_path);
      if (name == "simulate")
        rep = cmd_simulate(cfg, opts.seed, opts.out_dir);
      else if (name == "check-lyapunov")
        rep = cmd_check_lyapunov(cfg, opts.seed, opts.out_dir);
      else if (name == "check-fdt")
        rep = cmd_check_fdt(cfg, opts.seed, opts.out_dir);
      else if (name == "check-gadt")
        rep = cmd_check_gadt(cfg, opts.seed, opts.out_dir);
      else if (name == "estimate")
        rep = cmd_estimate(cfg, opts.seed, opts.out_dir);
      else if (name == "falsify")
        rep = cmd_falsify(cfg, opts.seed, opts.out_dir);
    }
    std::cout << rep.text;
    return rep.exit_code;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ISS analysis of nonlinear impulsive systems"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string reproduce_name;

  auto* sim = app.add_subcommand("simulate", "simulate a hybrid trajectory");
  add_common(sim, opts);
  auto* lyap = app.add_subcommand("check-lyapunov",
                                  "audit the ISS-Lyapunov inequalities");
  add_common(lyap, opts);
  auto* fdt = app.add_subcommand("check-fdt",
                                 "check the fixed dwell-time condition");
  add_common(fdt, opts);
  auto* gadt = app.add_subcommand(
      "check-gadt", "check the generalized average dwell-time condition");
  add_common(gadt, opts);
  auto* est = app.add_subcommand("estimate", "construct beta and gamma");
  add_common(est, opts);
  auto* fal = app.add_subcommand("falsify",
                                 "Monte-Carlo check of the ISS estimate");
  add_common(fal, opts);
  auto* repr = app.add_subcommand("reproduce", "rerun a worked example");
  repr->add_option("name", reproduce_name,
                   "example_fdt | example_tradeoff | tightness")
      ->required();
  add_common(repr, opts, /*needs_config=*/false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  return dispatch(app.get_subcommands().front()->get_name(), opts,
                  reproduce_name);
}
