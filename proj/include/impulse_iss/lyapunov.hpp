#pragma once

// Candidate ISS-Lyapunov functions and sampling audits of their defining
// inequalities: the sandwich psi1(|x|) <= V(x) <= psi2(|x|) and, whenever
// V(x) >= chi(|u|), the flow decay grad V . f <= -phi(V) together with the
// jump envelope V(g(x,u)) <= alpha(V).
//
// Samples where grad V hits a kink of V are skipped and counted, never
// silently dropped.

#include <cmath>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "impulse_iss/comparison.hpp"
#include "impulse_iss/expr.hpp"
#include "impulse_iss/system.hpp"

namespace impiss {

struct GeneralRates {
  MonotoneFunction phi;    // PD decay rate
  MonotoneFunction alpha;  // PD jump envelope
};

struct ExponentialRates {
  double c = 0.0;
  double d = 0.0;  // jump factor e^{-d}; d != 0 required for gADT analysis
};

class ISSLyapunovCandidate {
 public:
  ISSLyapunovCandidate(Expr V, MonotoneFunction psi1, MonotoneFunction psi2,
                       MonotoneFunction chi,
                       std::variant<GeneralRates, ExponentialRates> kind)
      : V_(std::move(V)),
        psi1_(std::move(psi1)),
        psi2_(std::move(psi2)),
        chi_(std::move(chi)),
        kind_(std::move(kind)) {}

  const Expr& V() const { return V_; }
  const MonotoneFunction& psi1() const { return psi1_; }
  const MonotoneFunction& psi2() const { return psi2_; }
  const MonotoneFunction& chi() const { return chi_; }

  bool is_exponential() const {
    return std::holds_alternative<ExponentialRates>(kind_);
  }

  ExponentialRates exponential_rates() const {
    if (!is_exponential())
      throw std::logic_error("candidate is not exponential");
    return std::get<ExponentialRates>(kind_);
  }

  // phi as a comparison function; synthesized as c*s for the exponential kind.
  MonotoneFunction phi() const {
    if (is_exponential()) {
      const auto r = std::get<ExponentialRates>(kind_);
      std::ostringstream ss;
      ss.precision(17);
      ss << "(" << r.c << ") * s";
      return MonotoneFunction::parse(ss.str(), FunClass::PD);
    }
    return std::get<GeneralRates>(kind_).phi;
  }

  // alpha; synthesized as exp(-d)*s for the exponential kind.
  MonotoneFunction alpha() const {
    if (is_exponential()) {
      const auto r = std::get<ExponentialRates>(kind_);
      std::ostringstream ss;
      ss.precision(17);
      ss << "exp(-(" << r.d << ")) * s";
      return MonotoneFunction::parse(ss.str(), FunClass::PD);
    }
    return std::get<GeneralRates>(kind_).alpha;
  }

  double eval_V(std::span<const double> x) const {
    std::vector<double> scratch;
    std::vector<double> vals(V_.vars().size());
    // V's variables are a subset of x1..xn
    for (std::size_t i = 0; i < V_.vars().size(); ++i) {
      const std::string& name = V_.vars()[i];
      if (name.size() < 2 || name[0] != 'x')
        throw EvalError("V references non-state variable '" + name + "'");
      const int idx = std::stoi(name.substr(1)) - 1;
      if (idx < 0 || idx >= static_cast<int>(x.size()))
        throw EvalError("V references out-of-range variable '" + name + "'");
      vals[i] = x[static_cast<std::size_t>(idx)];
    }
    return V_.eval_indexed(vals, scratch);
  }

 private:
  Expr V_;
  MonotoneFunction psi1_, psi2_, chi_;
  std::variant<GeneralRates, ExponentialRates> kind_;
};

struct AuditViolation {
  std::vector<double> x, u;
  std::string which;  // "sandwich_lower", "sandwich_upper", "flow", "jump"
  double lhs = 0.0, rhs = 0.0;
};

struct AuditReport {
  std::size_t samples = 0;
  std::size_t skipped_nonsmooth = 0;
  std::vector<AuditViolation> violations;
  std::vector<std::string> errors;
  std::uint64_t seed = 0;

  bool pass() const { return violations.empty() && errors.empty(); }
  bool skip_warning() const {
    return samples > 0 &&
           static_cast<double>(skipped_nonsmooth) > 0.01 * samples;
  }
};

namespace detail {

// lhs <= rhs with additive slack 1e-9 scaled by max(1, |rhs|)
inline bool leq_tol(double lhs, double rhs) {
  return lhs <= rhs + 1e-9 * std::max(1.0, std::fabs(rhs));
}

inline double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double c : v) s += c * c;
  return std::sqrt(s);
}

}  // namespace detail

inline AuditReport check_sandwich(const ISSLyapunovCandidate& cand,
                                  const std::vector<std::vector<double>>& states) {
  if (states.empty()) throw std::invalid_argument("no samples");
  AuditReport rep;
  for (const auto& x : states) {
    ++rep.samples;
    try {
      const double r = detail::norm2(x);
      const double v = cand.eval_V(x);
      const double lo = cand.psi1()(r);
      const double hi = cand.psi2()(r);
      if (!detail::leq_tol(lo, v))
        rep.violations.push_back({x, {}, "sandwich_lower", lo, v});
      if (!detail::leq_tol(v, hi))
        rep.violations.push_back({x, {}, "sandwich_upper", v, hi});
    } catch (const EvalError& e) {
      rep.errors.push_back(e.what());
    }
  }
  return rep;
}

inline AuditReport check_implication(
    const ISSLyapunovCandidate& cand, const ImpulsiveSystem& sys,
    const std::vector<std::pair<std::vector<double>, std::vector<double>>>&
        samples) {
  if (samples.empty()) throw std::invalid_argument("no samples");
  const int n = sys.state_dim();
  const int m = sys.input_dim();
  const MonotoneFunction phi = cand.phi();
  const MonotoneFunction alpha = cand.alpha();
  std::vector<std::string> state_names;
  for (int i = 0; i < n; ++i) state_names.push_back("x" + std::to_string(i + 1));

  AuditReport rep;
  std::vector<double> xu(static_cast<std::size_t>(n + m));
  std::vector<double> fx, gx, scratch;
  for (const auto& [x, u] : samples) {
    ++rep.samples;
    try {
      const double v = cand.eval_V(x);
      const double gate = cand.chi()(detail::norm2(u));
      if (v < gate) continue;  // vacuously passing

      Bindings env;
      for (int i = 0; i < n; ++i)
        env[state_names[static_cast<std::size_t>(i)]] =
            x[static_cast<std::size_t>(i)];
      GradResult gv = cand.V().eval_with_gradient(env, state_names);
      if (gv.nonsmooth) {
        ++rep.skipped_nonsmooth;
        continue;
      }

      std::copy(x.begin(), x.end(), xu.begin());
      std::copy(u.begin(), u.end(), xu.begin() + n);
      sys.eval_flow(xu, fx, scratch);
      double dot = 0.0;
      for (int i = 0; i < n; ++i)
        dot += gv.gradient[static_cast<std::size_t>(i)] *
               fx[static_cast<std::size_t>(i)];
      const double decay_rhs = -phi(v);
      if (!detail::leq_tol(dot, decay_rhs))
        rep.violations.push_back({x, u, "flow", dot, decay_rhs});

      sys.eval_jump(xu, gx, scratch);
      const double v_post = cand.eval_V(gx);
      const double jump_rhs = alpha(v);
      if (!detail::leq_tol(v_post, jump_rhs))
        rep.violations.push_back({x, u, "jump", v_post, jump_rhs});
    } catch (const EvalError& e) {
      rep.errors.push_back(e.what());
    }
  }
  return rep;
}

// Default audit sampling: |x| log-radial over [1e-6, 1e3], |u| likewise over
// (0, 1e3] with every tenth sample forced to u = 0. Deterministic in the seed.
inline std::vector<std::pair<std::vector<double>, std::vector<double>>>
make_audit_samples(int n, int m, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mag(-6.0, 3.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto draw_vec = [&](int dim) {
    std::vector<double> v(static_cast<std::size_t>(dim));
    double s = 0.0;
    for (auto& c : v) {
      c = gauss(rng);
      s += c * c;
    }
    s = std::sqrt(s);
    const double r = std::pow(10.0, mag(rng));
    for (auto& c : v) c = (s > 0.0 ? c / s : 0.0) * r;
    return v;
  };
  std::vector<std::pair<std::vector<double>, std::vector<double>>> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto x = draw_vec(n);
    auto u = draw_vec(m);
    if (i % 10 == 0) std::fill(u.begin(), u.end(), 0.0);
    out.emplace_back(std::move(x), std::move(u));
  }
  return out;
}

}  // namespace impiss
