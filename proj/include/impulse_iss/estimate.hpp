#pragma once

// Construction of the comparison functions beta and gamma from a verified
// certificate, and Monte-Carlo checking of the resulting ISS estimate
// |x(t)| <= max{beta(|x0|, t - t0), gamma(||u||_inf)}.
//
// FDT route: F(q) = integral of 1/phi from a fixed base to q; the one-step
// contraction zeta(r) = F^{-1}(F(r) - delta); the staircase envelope
// beta_tilde(r, t) = zeta^k(max{r, alpha(r)}) with k = floor(t / theta) and
// delta' = min(delta, theta). The initial max absorbs a possible immediate
// jump; every elapsed theta-window shifts F by at most -delta' (a full
// inter-jump cycle contributes -delta, a jump-free window -theta). Both beta
// and gamma pass through psi1^{-1} at the end.
//
// gADT route: beta(r, t) = psi1^{-1}(e^{mu - lambda t} psi2(r)) and
// gamma(r) = psi1^{-1}(e^{mu} max{1, e^{-d}} chi(r)); the envelope h is
// decreasing for lambda > 0, so C = sup h = e^{mu}.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <memory>
#include <mutex>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include "impulse_iss/comparison.hpp"
#include "impulse_iss/dwell.hpp"
#include "impulse_iss/lyapunov.hpp"
#include "impulse_iss/quadrature.hpp"
#include "impulse_iss/system.hpp"

namespace impiss {

class FTransform {
 public:
  explicit FTransform(MonotoneFunction phi, double base = 1.0,
                      double tol = 1e-9)
      : phi_(std::move(phi)), base_(base), tol_(tol) {
    if (!(base_ > 0.0)) throw std::invalid_argument("F base must be > 0");
  }

  double base() const { return base_; }
  const MonotoneFunction& phi() const { return phi_; }

  // F(q) = integral of ds/phi(s) from base to q; F(base) = 0 exactly.
  //
  // Evaluated in log space over a fixed panel grid anchored at the base, with
  // cached prefix sums; only the final partial panel depends on q. Repeated
  // evaluations then share the panel errors exactly, which is what keeps
  // F^{-1}(F(q)) accurate where F is nearly flat (wide q, decaying 1/phi).
  double value(double q) const {
    if (!(q > 0.0)) throw std::domain_error("F is defined on (0, inf)");
    if (q == base_) return 0.0;
    const double t0 = std::log(base_);
    const double t = std::log(q);
    const int k = static_cast<int>(std::trunc((t - t0) / kPanel));
    const double tk = t0 + kPanel * k;
    const double head = prefix(k);
    if (t == tk) return head;
    return head + panel_integral(tk, t);
  }

  struct InvResult {
    double q = 0.0;
    bool underflow = false;  // v below the attainable range: bound hit zero
  };

  // q with F(q) = v, via bracket expansion and log-space bisection.
  InvResult inverse(double v) const {
    double lo = base_, hi = base_;
    if (v >= 0.0) {
      while (value(hi) < v) {
        hi *= 2.0;
        if (hi > 1e300) {
          if (value(hi) < v)
            throw std::domain_error(
                "F^{-1}: value above the attainable range (phi integrable at "
                "infinity)");
          break;
        }
      }
      lo = hi > base_ ? hi / 2.0 : base_ / 2.0;
      if (hi == base_) lo = base_;
    } else {
      while (value(lo) > v) {
        lo /= 2.0;
        if (lo < 1e-300) {
          if (value(lo) > v) return {0.0, true};
          break;
        }
      }
      hi = lo < base_ ? lo * 2.0 : base_;
    }
    if (lo == hi) return {lo, false};
    double llo = std::log(lo), lhi = std::log(hi);
    while (lhi - llo > 1e-12) {
      const double mid = 0.5 * (llo + lhi);
      if (value(std::exp(mid)) >= v)
        lhi = mid;
      else
        llo = mid;
    }
    return {std::exp(0.5 * (llo + lhi)), false};
  }

 private:
  static constexpr double kPanel = 0.25;

  double panel_integral(double ta, double tb) const {
    auto integrand = [&](double t) {
      const double s = std::exp(t);
      const double p = phi_(s);
      if (p == 0.0) throw QuadratureError("phi vanishes inside the interval");
      return s / p;
    };
    // relative target: panel magnitudes range over many decades and an
    // absolute one would either stall on huge panels or starve tiny ones
    return integrate_relative(integrand, ta, tb, tol_, 1e-15, 48);
  }

  // cached F at t0 + k * kPanel, k full panels away from the base
  double prefix(int k) const {
    if (k == 0) return 0.0;
    const double t0 = std::log(base_);
    std::lock_guard<std::mutex> lk(mu_);
    auto& table = k > 0 ? up_ : down_;
    const double dir = k > 0 ? 1.0 : -1.0;
    const std::size_t need = static_cast<std::size_t>(k > 0 ? k : -k);
    while (table.size() < need) {
      const double prev = table.empty() ? 0.0 : table.back();
      const double a = t0 + dir * kPanel * static_cast<double>(table.size());
      table.push_back(prev + panel_integral(a, a + dir * kPanel));
    }
    return table[need - 1];
  }

  MonotoneFunction phi_;
  double base_;
  double tol_;
  mutable std::vector<double> up_, down_;
  mutable std::mutex mu_;
};

inline double f_value(const FTransform& ft, double q) { return ft.value(q); }

inline double f_inverse(const FTransform& ft, double v) {
  auto r = ft.inverse(v);
  return r.q;
}

// One contraction step zeta(r) = F^{-1}(F(r) - delta); 0 on range underflow.
inline double zeta(const FTransform& ft, double delta, double r) {
  if (!(r > 0.0)) throw std::domain_error("zeta: r must be > 0");
  if (!(delta > 0.0)) throw std::invalid_argument("zeta: delta must be > 0");
  return ft.inverse(ft.value(r) - delta).q;
}

struct BetaGamma {
  enum class Provenance { FDT, GADT };

  // estimate-space callables
  std::function<double(double, double)> beta;  // (r, t)
  std::function<double(double)> gamma;         // (r)

  // Lyapunov-level callables: beta_level(r, t) and gamma_level(r) give the
  // V-space level whose psi1^{-1} is beta/gamma. check_iss_bound compares
  // against these directly to avoid per-sample inversion.
  std::function<double(double, double)> beta_level;
  std::function<double(double)> gamma_level;
  // V-space staircase for all k = 0..kmax at once, starting from a V-level
  // (FDT only; one zeta per step)
  std::function<std::vector<double>(double, int)> beta_level_profile;

  // thresholds delimiting the proof's sublevel sets, as functions of ||u||
  std::function<double(double)> inner_threshold;  // chi(||u||)
  std::function<double(double)> outer_threshold;  // alpha-tilde or C max{..} chi

  Provenance provenance = Provenance::FDT;
  double staircase_period = 0.0;  // theta; beta constant between multiples
};

namespace detail {

inline double psi1_inverse(const MonotoneFunction& psi1, double level) {
  if (level <= 0.0) return 0.0;
  return invert(psi1, level, 1e-10);
}

}  // namespace detail

// Staircase KL-bound from the FDT certificate. Caller is responsible for
// having checked fdt_margin(theta, delta) beforehand.
inline BetaGamma build_beta_fdt(const ISSLyapunovCandidate& cand, double theta,
                                double delta) {
  if (cand.is_exponential())
    throw std::invalid_argument("build_beta_fdt expects the general kind");
  FDTParams{theta, delta}.validate();
  const double delta_eff = std::min(delta, theta);
  auto ft = std::make_shared<FTransform>(cand.phi());
  auto alpha = std::make_shared<MonotoneFunction>(cand.alpha());
  auto psi1 = std::make_shared<MonotoneFunction>(cand.psi1());
  auto psi2 = std::make_shared<MonotoneFunction>(cand.psi2());

  BetaGamma bg;
  bg.provenance = BetaGamma::Provenance::FDT;
  bg.staircase_period = theta;
  bg.beta_level_profile = [ft, alpha, delta_eff](double r, int kmax) {
    std::vector<double> levels(static_cast<std::size_t>(kmax) + 1);
    double z = r > 0.0 ? std::max(r, (*alpha)(r)) : 0.0;
    levels[0] = z;
    for (int k = 1; k <= kmax; ++k) {
      if (z > 0.0) z = zeta(*ft, delta_eff, z);
      levels[static_cast<std::size_t>(k)] = z;
    }
    return levels;
  };
  bg.beta_level = [profile = bg.beta_level_profile, psi2, theta](double r,
                                                                 double t) {
    if (r <= 0.0) return 0.0;
    const int k = t > 0.0 ? static_cast<int>(std::floor(t / theta)) : 0;
    return profile((*psi2)(r), k).back();
  };
  bg.beta = [level = bg.beta_level, psi1](double r, double t) {
    return detail::psi1_inverse(*psi1, level(r, t));
  };
  return bg;
}

// Gain from the FDT certificate: gamma = psi1^{-1} of the alpha-tilde
// envelope max{ max_{0<=s<=chi(r)} alpha(s), chi(r) }.
inline BetaGamma build_gamma_fdt(const ISSLyapunovCandidate& cand) {
  if (cand.is_exponential())
    throw std::invalid_argument("build_gamma_fdt expects the general kind");
  auto alpha = std::make_shared<MonotoneFunction>(cand.alpha());
  auto chi = std::make_shared<MonotoneFunction>(cand.chi());
  auto psi1 = std::make_shared<MonotoneFunction>(cand.psi1());

  BetaGamma bg;
  bg.provenance = BetaGamma::Provenance::FDT;
  auto alpha_tilde = [alpha, chi](double r) {
    if (r <= 0.0) return 0.0;
    const double gate = (*chi)(r);
    return std::max(max_envelope(*alpha, gate), gate);
  };
  bg.gamma_level = alpha_tilde;
  bg.inner_threshold = [chi](double r) { return r > 0.0 ? (*chi)(r) : 0.0; };
  bg.outer_threshold = alpha_tilde;
  std::function<double(double)> gamma = [alpha_tilde, psi1](double r) {
    return detail::psi1_inverse(*psi1, alpha_tilde(r));
  };
  // guard against flat-at-zero degeneracy with a strictly increasing nudge
  bool flat = false;
  for (double r : {1e-6, 1e-3, 1e-1, 1.0, 10.0})
    if (gamma(r) == 0.0) flat = true;
  if (flat)
    gamma = [base = gamma](double r) { return base(r) + 1e-12 * r; };
  bg.gamma = std::move(gamma);
  return bg;
}

inline BetaGamma build_fdt(const ISSLyapunovCandidate& cand, double theta,
                           double delta) {
  BetaGamma b = build_beta_fdt(cand, theta, delta);
  BetaGamma g = build_gamma_fdt(cand);
  b.gamma = g.gamma;
  b.gamma_level = g.gamma_level;
  b.inner_threshold = g.inner_threshold;
  b.outer_threshold = g.outer_threshold;
  return b;
}

inline BetaGamma build_beta_gamma_gadt(const ISSLyapunovCandidate& cand,
                                       const GADTEnvelope& env) {
  if (!cand.is_exponential())
    throw std::invalid_argument(
        "build_beta_gamma_gadt expects the exponential kind");
  const ExponentialRates rates = cand.exponential_rates();
  if (rates.d == 0.0)
    throw std::invalid_argument("gADT analysis requires d != 0");
  if (!(env.lambda > 0.0))
    throw std::invalid_argument(
        "gADT construction requires lambda > 0 (no class-L bound otherwise)");
  auto psi1 = std::make_shared<MonotoneFunction>(cand.psi1());
  auto psi2 = std::make_shared<MonotoneFunction>(cand.psi2());
  auto chi = std::make_shared<MonotoneFunction>(cand.chi());
  const double mu = env.mu, lambda = env.lambda;
  const double overshoot = std::exp(mu) * std::max(1.0, std::exp(-rates.d));

  BetaGamma bg;
  bg.provenance = BetaGamma::Provenance::GADT;
  bg.beta_level = [psi2, mu, lambda](double r, double t) {
    if (r <= 0.0) return 0.0;
    return std::exp(mu - lambda * t) * (*psi2)(r);
  };
  bg.gamma_level = [chi, overshoot](double r) {
    return r > 0.0 ? overshoot * (*chi)(r) : 0.0;
  };
  bg.beta = [level = bg.beta_level, psi1](double r, double t) {
    return detail::psi1_inverse(*psi1, level(r, t));
  };
  bg.gamma = [level = bg.gamma_level, psi1](double r) {
    return detail::psi1_inverse(*psi1, level(r));
  };
  bg.inner_threshold = [chi](double r) { return r > 0.0 ? (*chi)(r) : 0.0; };
  bg.outer_threshold = bg.gamma_level;
  return bg;
}

struct TrialRanges {
  double x0_max = 1.0;
  double u_max = 0.0;
  double horizon = 10.0;
  double step = 1e-3;
  int input_segments = 8;
  std::vector<SequenceSpec> sequences;  // cycled across trials
};

struct TrialResult {
  int id = 0;
  std::uint64_t seed = 0;
  double max_ratio = 0.0;
  double arg_t = 0.0;  // time of the worst ratio
  bool violated = false;
};

struct ISSCheckReport {
  int trials = 0;
  double tolerance = 1e-6;
  std::vector<TrialResult> results;
  std::uint64_t seed = 0;

  bool pass() const {
    for (const auto& r : results)
      if (r.violated) return false;
    return true;
  }

  std::size_t violation_count() const {
    std::size_t n = 0;
    for (const auto& r : results)
      if (r.violated) ++n;
    return n;
  }

  void to_csv(std::ostream& out) const {
    out << "trial,seed,max_ratio,arg_t\n";
    out << std::setprecision(17);
    for (const auto& r : results)
      out << r.id << "," << r.seed << "," << r.max_ratio << "," << r.arg_t
          << "\n";
  }
};

struct InadmissibleSequenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Monte-Carlo check of the ISS estimate. Each trial draws an initial state,
// a piecewise-constant input, and an admissible impulse sequence, simulates,
// and tests the bound at every trajectory grid point (pre-jump states
// included). Violations are decided in Lyapunov-level space:
//   |x(t)| <= bound * (1 + tol)  <=>  psi1(|x(t)| / (1 + tol)) <= level,
// which avoids inverting psi1 at every grid point. Trials run concurrently;
// results are aggregated in trial order and each trial's randomness depends
// only on (seed, trial id).
inline ISSCheckReport check_iss_bound(
    const ImpulsiveSystem& sys, const ISSLyapunovCandidate& cand,
    const BetaGamma& bg, int trials, const TrialRanges& ranges,
    std::uint64_t seed,
    const std::function<bool(const ImpulseSequence&)>& admissible) {
  if (trials <= 0) throw std::invalid_argument("trials must be positive");
  if (ranges.sequences.empty())
    throw std::invalid_argument("no sequence specs given");
  const double tol = 1e-6;
  const double t0 = 0.0;
  const int n = sys.state_dim();
  const int m = sys.input_dim();
  const MonotoneFunction psi1 = cand.psi1();

  ISSCheckReport rep;
  rep.trials = trials;
  rep.tolerance = tol;
  rep.seed = seed;
  rep.results.resize(static_cast<std::size_t>(trials));

  std::atomic<bool> misconfigured{false};
  std::string misconfig_msg;
  std::mutex msg_mutex;

  auto run_trial = [&](int id) {
    const std::uint64_t trial_seed =
        seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(id + 1);
    std::mt19937_64 rng(trial_seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    auto draw_vec = [&](int dim, double max_norm) {
      std::vector<double> v(static_cast<std::size_t>(dim));
      double s = 0.0;
      for (auto& c : v) {
        c = gauss(rng);
        s += c * c;
      }
      s = std::sqrt(s);
      const double r = max_norm * unit(rng);
      for (auto& c : v) c = (s > 0.0 ? c / s : 0.0) * r;
      return v;
    };

    std::vector<double> x0 = draw_vec(n, ranges.x0_max);

    std::vector<double> bps{t0};
    for (int i = 1; i < ranges.input_segments; ++i)
      bps.push_back(t0 + (ranges.horizon - t0) * unit(rng));
    std::sort(bps.begin(), bps.end());
    bps.erase(std::unique(bps.begin(), bps.end()), bps.end());
    std::vector<std::vector<double>> uvals;
    for (std::size_t i = 0; i < bps.size(); ++i)
      uvals.push_back(draw_vec(m, ranges.u_max));
    InputSignal u(bps, uvals);

    const SequenceSpec& spec =
        ranges.sequences[static_cast<std::size_t>(id) %
                         ranges.sequences.size()];
    ImpulseSequence seq =
        generate_sequence(spec, t0, ranges.horizon, trial_seed ^ 0x5bf03635);
    if (!admissible(seq)) {
      std::lock_guard<std::mutex> lk(msg_mutex);
      misconfigured = true;
      misconfig_msg = "trial " + std::to_string(id) +
                      ": generated sequence fails its dwell-time check";
      return;
    }

    HybridTrajectory traj =
        simulate(sys, x0, t0, u, seq, ranges.horizon, ranges.step);

    const double r0 = detail::norm2(x0);
    const double u_norm = u.sup_norm();
    const double gamma_level = bg.gamma_level ? bg.gamma_level(u_norm) : 0.0;

    // precompute the beta level per grid point
    std::vector<double> staircase;
    if (bg.staircase_period > 0.0 && bg.beta_level_profile) {
      const int kmax = static_cast<int>(std::floor(
                           (ranges.horizon - t0) / bg.staircase_period)) +
                       1;
      const double r_psi = cand.psi2()(r0);
      staircase = bg.beta_level_profile(r_psi, kmax);
    }
    auto beta_level_at = [&](double t) {
      if (!staircase.empty()) {
        const int k = static_cast<int>(std::floor((t - t0) /
                                                  bg.staircase_period));
        return staircase[static_cast<std::size_t>(
            std::clamp(k, 0, static_cast<int>(staircase.size()) - 1))];
      }
      return bg.beta_level(r0, t - t0);
    };

    TrialResult res;
    res.id = id;
    res.seed = trial_seed;
    double worst_score = -std::numeric_limits<double>::infinity();
    double worst_level = 0.0, worst_norm = 0.0;
    for (const auto& p : traj.points) {
      const double xn = detail::norm2(p.x);
      const double level = std::max(beta_level_at(p.t), gamma_level);
      if (xn == 0.0) continue;
      if (level <= 0.0) {
        res.violated = true;
        res.max_ratio = std::numeric_limits<double>::infinity();
        res.arg_t = p.t;
        break;
      }
      const double shrunk = psi1(xn / (1.0 + tol));
      if (shrunk > level) res.violated = true;
      const double score = psi1(xn) / level;  // monotone proxy for the ratio
      if (score > worst_score) {
        worst_score = score;
        worst_level = level;
        worst_norm = xn;
        res.arg_t = p.t;
      }
    }
    if (std::isfinite(worst_score) && worst_score > 0.0 &&
        !std::isinf(res.max_ratio)) {
      const double bound =
          std::max(detail::psi1_inverse(psi1, worst_level), 1e-300);
      res.max_ratio = worst_norm / bound;
    }
    rep.results[static_cast<std::size_t>(id)] = res;
  };

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned workers = std::min<unsigned>(hw, 8);
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const int id = next.fetch_add(1);
        if (id >= trials || misconfigured) return;
        run_trial(id);
      }
    });
  for (auto& th : pool) th.join();
  if (misconfigured) throw InadmissibleSequenceError(misconfig_msg);
  return rep;
}

}  // namespace impiss
