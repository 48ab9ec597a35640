#pragma once

// Declared-class scalar comparison functions (positive definite, class-K,
// class-K-infinity, class-L) backed by DSL expressions, with sample-grid
// class auditing, monotone inversion, and max-envelope evaluation.
//
// Class membership is refuted or fails-to-refute on grids; it is never proved.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "impulse_iss/expr.hpp"

namespace impiss {

enum class FunClass { PD, K, Kinf, L };

inline const char* to_string(FunClass c) {
  switch (c) {
    case FunClass::PD: return "PD";
    case FunClass::K: return "K";
    case FunClass::Kinf: return "Kinf";
    case FunClass::L: return "L";
  }
  return "?";
}

class MonotoneFunction {
 public:
  MonotoneFunction(Expr body, FunClass declared)
      : body_(std::move(body)), declared_(declared) {
    if (body_.vars().size() > 1)
      throw std::invalid_argument(
          "comparison function must use a single variable, got " +
          std::to_string(body_.vars().size()));
    var_ = body_.vars().empty() ? std::string("r") : body_.vars()[0];
  }

  static MonotoneFunction parse(std::string_view text, FunClass declared) {
    return MonotoneFunction(Expr::parse(text), declared);
  }

  double operator()(double r) const {
    if (body_.vars().empty()) {
      std::vector<double> none;
      std::vector<double> scratch;
      return body_.eval_indexed(none, scratch);
    }
    const double vals[1] = {r};
    std::vector<double> scratch;
    return body_.eval_indexed(std::span<const double>(vals, 1), scratch);
  }

  FunClass declared_class() const { return declared_; }
  const Expr& body() const { return body_; }
  const std::string& variable() const { return var_; }
  bool increasing() const { return declared_ != FunClass::L; }

 private:
  Expr body_;
  std::string var_;
  FunClass declared_;
};

struct ClassReport {
  FunClass checked;
  std::size_t grid_size = 0;
  bool pass = false;
  std::optional<double> first_violation;  // grid point of the first failure
  std::string detail;
};

// 200 log-spaced points on [1e-9, 1e6] plus 0.
inline std::vector<double> default_audit_grid() {
  std::vector<double> g;
  g.push_back(0.0);
  const int n = 200;
  for (int i = 0; i < n; ++i) {
    double t = static_cast<double>(i) / (n - 1);
    g.push_back(std::pow(10.0, -9.0 + 15.0 * t));
  }
  return g;
}

inline ClassReport verify_class(const MonotoneFunction& fn,
                                std::span<const double> grid) {
  if (grid.empty()) throw std::invalid_argument("empty grid");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < 0.0) throw std::invalid_argument("negative grid point");
    if (i > 0 && grid[i] < grid[i - 1])
      throw std::invalid_argument("unsorted grid");
  }
  ClassReport rep;
  rep.checked = fn.declared_class();
  rep.grid_size = grid.size();

  std::vector<double> vals(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    try {
      vals[i] = fn(grid[i]);
    } catch (const EvalError& e) {
      rep.pass = false;
      rep.first_violation = grid[i];
      rep.detail = std::string("evaluation error: ") + e.what();
      return rep;
    }
  }

  auto fail = [&](double at, std::string why) {
    rep.pass = false;
    rep.first_violation = at;
    rep.detail = std::move(why);
  };

  const FunClass c = fn.declared_class();
  if (c == FunClass::PD || c == FunClass::K || c == FunClass::Kinf) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (grid[i] == 0.0 && std::fabs(vals[i]) > 1e-12) {
        fail(0.0, "f(0) != 0");
        return rep;
      }
      if (grid[i] > 0.0 && !(vals[i] > 0.0)) {
        fail(grid[i], "f(r) <= 0 for r > 0");
        return rep;
      }
    }
  }
  if (c == FunClass::K || c == FunClass::Kinf) {
    for (std::size_t i = 1; i < grid.size(); ++i) {
      if (grid[i] > grid[i - 1] && !(vals[i] > vals[i - 1])) {
        fail(grid[i], "not strictly increasing");
        return rep;
      }
    }
  }
  if (c == FunClass::L) {
    for (std::size_t i = 1; i < grid.size(); ++i) {
      // an exactly-zero tail (underflow of the limit) is not a refutation
      if (grid[i] > grid[i - 1] && !(vals[i] < vals[i - 1]) &&
          vals[i] != 0.0) {
        fail(grid[i], "not strictly decreasing");
        return rep;
      }
      if (vals[i] < 0.0) {
        fail(grid[i], "negative value");
        return rep;
      }
    }
    // decay-to-zero heuristic along the tail of the grid
    if (vals.back() > 1e-6 * std::max(1.0, vals.front())) {
      fail(grid.back(), "tail value not near 0");
      return rep;
    }
  }
  rep.pass = true;
  return rep;
}

// Preimage of y under a strictly monotone fn: bracket expansion by doubling,
// then bisection until the bracket width is <= tol * max(1, |x|).
inline double invert(const MonotoneFunction& fn, double y, double tol = 1e-10) {
  const bool inc = fn.increasing();
  const double f0 = fn(0.0);
  if (inc) {
    if (y < f0) throw std::domain_error("invert: y below fn(0), no preimage");
    if (y == f0) return 0.0;
  } else {
    if (y > f0) throw std::domain_error("invert: y above fn(0), no preimage");
    if (y == f0) return 0.0;
  }
  double lo = 0.0, hi = 1.0;
  auto past = [&](double v) { return inc ? v >= y : v <= y; };
  while (!past(fn(hi))) {
    hi *= 2.0;
    if (hi > 1e308)
      throw std::domain_error("invert: y unreachable within [0, 1e308]");
  }
  if (hi > 1.0) lo = hi / 2.0;
  while (hi - lo > tol * std::max(1.0, std::fabs(0.5 * (lo + hi)))) {
    const double mid = 0.5 * (lo + hi);
    if (past(fn(mid)))
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

// max of fn over [0, s]: uniform grid of grid_density+1 points, golden-section
// refinement around the best grid point. Result >= fn(0) and >= fn(s).
inline double max_envelope(const MonotoneFunction& fn, double s,
                           int grid_density = 512) {
  if (s < 0.0) throw std::invalid_argument("max_envelope: s < 0");
  if (s == 0.0) return fn(0.0);
  const int n = std::max(grid_density, 2);
  double best = -std::numeric_limits<double>::infinity();
  int best_i = 0;
  for (int i = 0; i <= n; ++i) {
    const double r = s * static_cast<double>(i) / n;
    const double v = fn(r);
    if (v > best) {
      best = v;
      best_i = i;
    }
  }
  // golden-section around the winning grid point
  double a = s * static_cast<double>(std::max(best_i - 1, 0)) / n;
  double b = s * static_cast<double>(std::min(best_i + 1, n)) / n;
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - gr * (b - a);
  double x2 = a + gr * (b - a);
  double f1 = fn(x1), f2 = fn(x2);
  for (int it = 0; it < 80 && b - a > 1e-12 * std::max(1.0, s); ++it) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = fn(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = fn(x1);
    }
  }
  best = std::max({best, f1, f2, fn(s), fn(0.0)});
  return best;
}

}  // namespace impiss
