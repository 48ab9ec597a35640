// End-to-end acceptance checks. Each test prints a single verdict line so a
// scan of the log shows the per-criterion outcome at a glance.

#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "impulse_iss/cli.hpp"
#include "impulse_iss/config.hpp"
#include "impulse_iss/dwell.hpp"
#include "impulse_iss/estimate.hpp"
#include "impulse_iss/expr.hpp"
#include "impulse_iss/system.hpp"

using namespace impiss;

#ifndef IMPISS_CONFIG_DIR
#define IMPISS_CONFIG_DIR "configs"
#endif

namespace {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

void verdict(int num, bool ok, const std::string& what, double elapsed) {
  std::printf("[criterion %02d] %s  %s (%.2fs)\n", num, ok ? "PASS" : "FAIL",
              what.c_str(), elapsed);
  std::fflush(stdout);
}

MonotoneFunction cubic_phi(double a0) {
  std::ostringstream ss;
  ss.precision(17);
  ss << "(" << 1.0 - a0 << ") * s^3";
  return MonotoneFunction::parse(ss.str(), FunClass::PD);
}

MonotoneFunction cubic_alpha(double a0) {
  std::ostringstream ss;
  ss.precision(17);
  ss << "s + (" << 1.0 + a0 << ") * s^3";
  return MonotoneFunction::parse(ss.str(), FunClass::PD);
}

double cubic_integral_exact(double y, double a) {
  const double w = 1.0 + (1.0 + a) * y * y;
  return (1.0 + a) * (2.0 + (1.0 + a) * y * y) / (2.0 * (1.0 - a) * w * w);
}

std::string config_path(const char* name) {
  return std::string(IMPISS_CONFIG_DIR) + "/" + name;
}

}  // namespace

TEST_CASE("criterion 1: quadrature matches the dwell-integral closed form") {
  Stopwatch sw;
  bool ok = true;
  for (double a0 : {0.1, 1.0 / 3.0, 0.5}) {
    auto phi = cubic_phi(a0);
    auto alpha = cubic_alpha(a0);
    for (int i = 0; i < 50; ++i) {
      const double y =
          std::pow(10.0, -3.0 + 4.0 * static_cast<double>(i) / 49.0);
      const double got = fdt_integral(phi, alpha, y);
      const double want = cubic_integral_exact(y, a0);
      if (std::fabs(got - want) > 1e-6 * std::fabs(want)) ok = false;
    }
  }
  const double t = sw.seconds();
  ok = ok && t < 5.0;
  verdict(1, ok, "fdt_integral vs closed form, rel <= 1e-6, 150 points", t);
  CHECK(ok);
}

TEST_CASE("criterion 2: fdt supremum recovers (1+a)/(1-a)") {
  Stopwatch sw;
  bool ok = true;
  for (double a0 : {0.1, 1.0 / 3.0, 0.5}) {
    const double analytic = (1.0 + a0) / (1.0 - a0);
    const double theta = analytic + 1.0, delta = 0.5;
    DwellTimeReport r = fdt_margin(cubic_phi(a0), cubic_alpha(a0), theta, delta);
    const double sup = (theta - delta) - r.margin;
    if (std::fabs(sup - analytic) > 0.01 * analytic) ok = false;
  }
  const double t = sw.seconds();
  ok = ok && t < 10.0;
  verdict(2, ok, "fdt_margin supremum within 1% of (1+a)/(1-a)", t);
  CHECK(ok);
}

TEST_CASE("criterion 3: simulation reproduces the exact linear solution") {
  Stopwatch sw;
  auto sys = ImpulsiveSystem::parse(1, 1, {"-x1"}, {"exp(0.5) * x1"});
  ImpulseSequence seq =
      generate_sequence(SequenceSpec::periodic(1.0), 0.0, 20.0, 0);
  InputSignal u0 = InputSignal::constant({0.0});
  HybridTrajectory traj = simulate(sys, {1.0}, 0.0, u0, seq, 20.0, 1e-3);
  bool ok = true;
  for (const auto& p : traj.points) {
    const int jumps = count_impulses(seq, 0.0, p.t) - (p.pre_jump ? 1 : 0);
    const double exact = std::exp(0.5 * jumps - p.t);
    if (std::fabs(p.x[0] - exact) > 1e-9 * exact) ok = false;
  }
  const double t = sw.seconds();
  ok = ok && t < 2.0;
  verdict(3, ok, "tightness system exact to rel 1e-9 at every grid point", t);
  CHECK(ok);
}

TEST_CASE("criterion 4: gadt checker agrees with brute force") {
  Stopwatch sw;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int agree = 0;
  const int cases = 50;
  for (int trial = 0; trial < cases; ++trial) {
    const double horizon = 10.0 + 20.0 * unit(rng);
    SequenceSpec spec =
        trial % 2 == 0
            ? SequenceSpec::poisson(0.5 + 2.5 * unit(rng), 0.05)
            : SequenceSpec::jittered(0.1 + 0.5 * unit(rng), 0.5 * unit(rng));
    ImpulseSequence seq = generate_sequence(
        spec, 0.0, horizon, 1000 + static_cast<std::uint64_t>(trial));
    if (seq.times.size() > 100) {
      seq.times.resize(100);
    }
    const double hz = seq.times.empty() ? horizon
                                        : std::min(horizon, seq.times.back() +
                                                                unit(rng));
    const double c = 0.3 + 1.7 * unit(rng);
    const double d = -1.2 + 2.4 * unit(rng);
    const GADTEnvelope env{0.05 + 1.95 * unit(rng), 0.05 + 0.95 * unit(rng)};

    const bool got = check_gadt(seq, c, d, env, hz).pass();

    // brute force: every index pair, plus random jump-free durations
    std::vector<double> times;
    for (double ti : seq.times)
      if (ti <= hz) times.push_back(ti);
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < times.size(); ++i)
      for (std::size_t j = i; j < times.size(); ++j) {
        const double r = times[j] - times[i];
        const double k = static_cast<double>(j - i + 1);
        worst = std::min(worst, env.mu - env.lambda * r + d * k + c * r);
      }
    const double span = hz - seq.t0;
    worst = std::min(worst, env.mu - env.lambda * span + c * span);
    for (int w = 0; w < 10000; ++w) {
      const double r = span * unit(rng);
      if (r <= 0.0) continue;
      worst = std::min(worst, env.mu - env.lambda * r + c * r);
    }
    const bool want = worst >= -1e-12;
    if (got == want) ++agree;
  }
  const bool ok = agree == cases;
  verdict(4, ok,
          "check_gadt vs brute force on 50 random sequences: " +
              std::to_string(agree) + "/50 agree",
          sw.seconds());
  CHECK(ok);
}

TEST_CASE("criterion 5: fdt-built ISS bound holds over 500 trials") {
  Stopwatch sw;
  AnalysisConfig cfg = load_config(config_path("cubic_fdt.json"));
  const ImpulsiveSystem& sys = cfg.require_system();
  const ISSLyapunovCandidate& cand = cfg.require_lyapunov();
  REQUIRE(cfg.fdt.has_value());
  REQUIRE(fdt_margin(cand.phi(), cand.alpha(), cfg.fdt->theta, cfg.fdt->delta)
              .pass());
  BetaGamma bg = build_fdt(cand, cfg.fdt->theta, cfg.fdt->delta);

  TrialRanges ranges;
  ranges.x0_max = 5.0;
  ranges.u_max = 1.0;
  ranges.horizon = 50.0;
  ranges.step = 1e-3;
  ranges.sequences = {SequenceSpec::periodic(2.3),
                      SequenceSpec::jittered(2.3, 1.2)};
  const double theta = cfg.fdt->theta;
  auto admissible = [theta](const ImpulseSequence& s) {
    return s.times.empty() || s.min_gap() >= theta - 1e-9;
  };
  ISSCheckReport rep = check_iss_bound(sys, cand, bg, 500, ranges, 42,
                                       admissible);
  const double t = sw.seconds();
  const bool ok = rep.pass() && rep.violation_count() == 0 && t < 60.0;
  verdict(5, ok,
          "cubic benchmark, 500 trials, violations: " +
              std::to_string(rep.violation_count()),
          t);
  CHECK(ok);
}

TEST_CASE("criterion 6: gadt-built ISS bound holds over 200 trials") {
  Stopwatch sw;
  AnalysisConfig cfg = load_config(config_path("linear_gadt.json"));
  const ImpulsiveSystem& sys = cfg.require_system();
  const ISSLyapunovCandidate& cand = cfg.require_lyapunov();
  REQUIRE(cfg.gadt.has_value());
  BetaGamma bg = build_beta_gamma_gadt(cand, *cfg.gadt);

  TrialRanges ranges;
  ranges.x0_max = 3.0;
  ranges.u_max = 1.0;
  ranges.horizon = 20.0;
  ranges.step = 1e-3;
  ranges.sequences = {SequenceSpec::periodic(1.0)};
  const ExponentialRates rates = cand.exponential_rates();
  const GADTEnvelope env = *cfg.gadt;
  auto admissible = [&](const ImpulseSequence& s) {
    return check_gadt(s, rates.c, rates.d, env, ranges.horizon).pass();
  };
  ISSCheckReport rep = check_iss_bound(sys, cand, bg, 200, ranges, 42,
                                       admissible);
  const double t = sw.seconds();
  const bool ok = rep.pass() && t < 30.0;
  verdict(6, ok,
          "exponential benchmark, 200 trials, violations: " +
              std::to_string(rep.violation_count()),
          t);
  CHECK(ok);
}

TEST_CASE("criterion 7: zeta iterates contract below 0.1 within 400 steps") {
  Stopwatch sw;
  FTransform ft(cubic_phi(1.0 / 3.0));
  double z = 10.0;
  bool decreasing = true;
  int steps = 0;
  while (z >= 0.1 && steps < 400) {
    const double next = zeta(ft, 0.2, z);
    if (!(next < z)) decreasing = false;
    z = next;
    ++steps;
  }
  const bool ok = decreasing && z < 0.1 && steps <= 400;
  verdict(7, ok,
          "strictly decreasing, below 0.1 after " + std::to_string(steps) +
              " iterations",
          sw.seconds());
  CHECK(ok);
}

TEST_CASE("criterion 8: F round-trip to rel 1e-7 over random q") {
  Stopwatch sw;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> mag(-4.0, 4.0);
  bool ok = true;
  double worst = 0.0;
  for (const char* body :
       {"s", "s^3", "0.66666666666666663 * s^3", "s + s^3"}) {
    FTransform ft(MonotoneFunction::parse(body, FunClass::PD));
    for (int i = 0; i < 100; ++i) {
      const double q = std::pow(10.0, mag(rng));
      const double back = f_inverse(ft, f_value(ft, q));
      const double rel = std::fabs(back - q) / q;
      worst = std::max(worst, rel);
      if (rel > 1e-7) ok = false;
    }
  }
  std::ostringstream note;
  note << "400 round trips, worst rel error " << std::scientific
       << std::setprecision(2) << worst;
  verdict(8, ok, note.str(), sw.seconds());
  CHECK(ok);
}

TEST_CASE("criterion 9: autodiff matches finite differences on config expressions") {
  Stopwatch sw;
  std::vector<std::string> exprs;
  for (const char* name :
       {"cubic_fdt.json", "linear_gadt.json", "tightness.json"}) {
    std::ifstream in(config_path(name));
    REQUIRE(in.good());
    nlohmann::json j;
    in >> j;
    if (j.contains("system")) {
      for (const auto& s : j["system"]["flow"]) exprs.push_back(s);
      for (const auto& s : j["system"]["jump"]) exprs.push_back(s);
    }
    if (j.contains("lyapunov")) {
      for (const char* key : {"V", "psi1", "psi2", "chi", "phi", "alpha"})
        if (j["lyapunov"].contains(key))
          exprs.push_back(j["lyapunov"][key].get<std::string>());
    }
  }
  REQUIRE(exprs.size() >= 10);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> val(0.2, 2.5);
  bool ok = true;
  for (const std::string& text : exprs) {
    Expr e = Expr::parse(text);
    std::vector<std::string> wrt = e.vars();
    if (wrt.empty()) continue;
    for (int i = 0; i < 100; ++i) {
      Bindings env;
      for (const auto& v : wrt) env[v] = val(rng);
      GradResult g = e.eval_with_gradient(env, wrt);
      if (g.nonsmooth) continue;
      for (std::size_t k = 0; k < wrt.size(); ++k) {
        const double h = 1e-6;
        Bindings lo = env, hi = env;
        lo[wrt[k]] -= h;
        hi[wrt[k]] += h;
        const double fd = (e.eval(hi) - e.eval(lo)) / (2.0 * h);
        if (std::fabs(g.gradient[k] - fd) >
            1e-6 * std::max(1.0, std::fabs(fd)))
          ok = false;
      }
    }
  }
  verdict(9, ok,
          "gradients of " + std::to_string(exprs.size()) +
              " shipped expressions vs central differences",
          sw.seconds());
  CHECK(ok);
}

TEST_CASE("criterion 10: stability boundary and envelope sweep") {
  Stopwatch sw;
  auto sys = ImpulsiveSystem::parse(1, 1, {"-x1"}, {"exp(0.5) * x1"});
  InputSignal u0 = InputSignal::constant({0.0});
  bool ok = true;

  ImpulseSequence fast =
      generate_sequence(SequenceSpec::periodic(0.4), 0.0, 60.0, 0);
  HybridTrajectory diverging = simulate(sys, {1.0}, 0.0, u0, fast, 60.0, 1e-3);
  ok = ok && diverging.max_norm() > 1e6;

  ImpulseSequence slow =
      generate_sequence(SequenceSpec::periodic(0.6), 0.0, 60.0, 0);
  HybridTrajectory decaying = simulate(sys, {1.0}, 0.0, u0, slow, 60.0, 1e-3);
  ok = ok && std::fabs(decaying.final_state()[0]) < 1e-3;

  // every envelope in the sweep must reject the diverging period
  bool rejected_all = true;
  for (int li = 1; li <= 10; ++li)
    for (int mi = 0; mi <= 8; ++mi) {
      const GADTEnvelope env{0.25 * mi, 0.1 * li};
      if (check_gadt(fast, 1.0, -0.5, env, 60.0).pass()) rejected_all = false;
    }
  ok = ok && rejected_all;
  verdict(10, ok,
          "tau = 0.4 diverges and is rejected by the whole envelope sweep; "
          "tau = 0.6 decays",
          sw.seconds());
  CHECK(ok);
}
