#pragma once

// Adaptive Simpson quadrature with Richardson correction.

#include <cmath>
#include <functional>
#include <stdexcept>

namespace impiss {

struct QuadratureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct QuadratureOptions {
  double tol = 1e-9;   // absolute error target
  int max_depth = 40;  // interval bisection cap
};

namespace detail {

template <class F>
double simpson(const F& f, double a, double m, double b, double fa, double fm,
               double fb) {
  (void)f;
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

template <class F>
double adapt(const F& f, double a, double b, double fa, double fm, double fb,
             double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  if (!std::isfinite(flm) || !std::isfinite(frm))
    throw QuadratureError("non-finite integrand");
  const double left = simpson(f, a, lm, m, fa, flm, fm);
  const double right = simpson(f, m, rm, b, fm, frm, fb);
  const double err = (left + right - whole) / 15.0;
  if (depth <= 0 || std::fabs(err) <= tol)
    return left + right + err;
  return adapt(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adapt(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

// Signed integral of f over [a, b] (negated when a > b).
template <class F>
double integrate(const F& f, double a, double b,
                 QuadratureOptions opt = {}) {
  if (a == b) return 0.0;
  double sign = 1.0;
  if (a > b) {
    std::swap(a, b);
    sign = -1.0;
  }
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  if (!std::isfinite(fa) || !std::isfinite(fm) || !std::isfinite(fb))
    throw QuadratureError("non-finite integrand at initial nodes");
  const double whole = detail::simpson(f, a, m, b, fa, fm, fb);
  return sign *
         detail::adapt(f, a, b, fa, fm, fb, whole, opt.tol, opt.max_depth);
}

// Two-pass integration with a relative error target. A single Simpson panel
// gives a crude magnitude estimate that scales the rough pass; the rough
// result then scales the refined pass. abs_floor is the tightest absolute
// tolerance either pass is allowed to request, so near-zero integrals do not
// demand unattainable precision.
template <class F>
double integrate_relative(const F& f, double a, double b, double rel_tol,
                          double abs_floor, int max_depth = 48) {
  if (a == b) return 0.0;
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  if (!std::isfinite(fa) || !std::isfinite(fm) || !std::isfinite(fb))
    throw QuadratureError("non-finite integrand at initial nodes");
  const double crude = std::fabs(detail::simpson(f, a, m, b, fa, fm, fb));
  const double rough_tol = std::max(abs_floor, 1e-4 * crude);
  const double rough = integrate(f, a, b, {rough_tol, 24});
  const double tol = std::max(abs_floor, rel_tol * std::fabs(rough));
  return integrate(f, a, b, {tol, max_depth});
}

}  // namespace impiss
