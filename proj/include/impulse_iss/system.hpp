#pragma once

// Impulsive system representation and hybrid trajectory simulation.
//
// Flow between impulses is integrated with classical fixed-step RK4; the step
// is subdivided so that every impulse time and every input breakpoint is hit
// exactly (last substep shortened). At an impulse time t_i the pre-jump state
// x^-(t_i) is recorded, the jump map is evaluated once with the left input
// limit u^-(t_i), and the post-jump state becomes the next segment's initial
// condition.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "impulse_iss/expr.hpp"

namespace impiss {

// Strictly increasing impulse times within a working horizon.
struct ImpulseSequence {
  double t0 = 0.0;
  std::vector<double> times;

  void validate() const {
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (!(times[i] > (i == 0 ? t0 : times[i - 1])))
        throw std::invalid_argument(
            "impulse times must be strictly increasing and exceed t0");
    }
  }

  double min_gap() const {
    double g = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < times.size(); ++i)
      g = std::min(g, times[i] - times[i - 1]);
    return g;
  }

  static ImpulseSequence from_csv(const std::string& path, double t0 = 0.0) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open sequence file " + path);
    ImpulseSequence seq;
    seq.t0 = t0;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (first && line == "t") {
        first = false;
        continue;
      }
      first = false;
      seq.times.push_back(std::stod(line));
    }
    seq.validate();
    return seq;
  }

  void to_csv(std::ostream& out) const {
    out << "t\n";
    out << std::setprecision(17);
    for (double t : times) out << t << "\n";
  }
};

// Number of impulse times in the half-open interval (s, t].
inline int count_impulses(const ImpulseSequence& seq, double s, double t) {
  if (s > t) throw std::invalid_argument("count_impulses: s > t");
  auto lo = std::upper_bound(seq.times.begin(), seq.times.end(), s);
  auto hi = std::upper_bound(seq.times.begin(), seq.times.end(), t);
  return static_cast<int>(hi - lo);
}

// Right-continuous piecewise-constant input with left limits.
// values[i] holds on [breakpoints[i], breakpoints[i+1]); the last value
// extends to +infinity.
class InputSignal {
 public:
  InputSignal(std::vector<double> breakpoints,
              std::vector<std::vector<double>> values)
      : breakpoints_(std::move(breakpoints)), values_(std::move(values)) {
    if (breakpoints_.empty() || breakpoints_.size() != values_.size())
      throw std::invalid_argument("input signal needs one value per interval");
    const std::size_t m = values_[0].size();
    for (std::size_t i = 1; i < breakpoints_.size(); ++i) {
      if (!(breakpoints_[i] > breakpoints_[i - 1]))
        throw std::invalid_argument("input breakpoints must strictly increase");
      if (values_[i].size() != m)
        throw std::invalid_argument("inconsistent input dimension");
    }
  }

  static InputSignal constant(std::vector<double> value, double start = 0.0) {
    return InputSignal({start}, {std::move(value)});
  }

  std::size_t dimension() const { return values_[0].size(); }
  const std::vector<double>& breakpoints() const { return breakpoints_; }

  const std::vector<double>& value_at(double t) const {
    return values_[interval_index(t)];
  }

  // u^-(t): the previous interval's value when t is a breakpoint.
  const std::vector<double>& left_limit(double t) const {
    auto it = std::lower_bound(breakpoints_.begin(), breakpoints_.end(), t);
    std::size_t idx;
    if (it != breakpoints_.end() && *it == t)
      idx = it == breakpoints_.begin()
                ? 0
                : static_cast<std::size_t>(it - breakpoints_.begin()) - 1;
    else
      idx = interval_index(t);
    return values_[idx];
  }

  double sup_norm() const {
    double best = 0.0;
    for (const auto& v : values_) {
      double s = 0.0;
      for (double c : v) s += c * c;
      best = std::max(best, std::sqrt(s));
    }
    return best;
  }

 private:
  std::size_t interval_index(double t) const {
    auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t);
    if (it == breakpoints_.begin())
      throw std::invalid_argument("input signal queried before first breakpoint");
    return static_cast<std::size_t>(it - breakpoints_.begin()) - 1;
  }

  std::vector<double> breakpoints_;
  std::vector<std::vector<double>> values_;
};

// x' = f(x, u) between impulses, x = g(x^-, u^-) at impulse times.
class ImpulsiveSystem {
 public:
  ImpulsiveSystem(int n, int m, std::vector<Expr> flow, std::vector<Expr> jump)
      : n_(n), m_(m), flow_(std::move(flow)), jump_(std::move(jump)) {
    if (n_ <= 0 || m_ < 0) throw std::invalid_argument("bad dimensions");
    if (static_cast<int>(flow_.size()) != n_ ||
        static_cast<int>(jump_.size()) != n_)
      throw std::invalid_argument("need n flow and n jump expressions");
    for (int i = 0; i < n_; ++i) names_.push_back("x" + std::to_string(i + 1));
    for (int j = 0; j < m_; ++j) names_.push_back("u" + std::to_string(j + 1));
    for (const Expr& e : flow_) flow_slots_.push_back(e.bind_slots(names_));
    for (const Expr& e : jump_) jump_slots_.push_back(e.bind_slots(names_));
  }

  static ImpulsiveSystem parse(int n, int m,
                               const std::vector<std::string>& flow,
                               const std::vector<std::string>& jump) {
    std::vector<Expr> f, g;
    for (const auto& s : flow) f.push_back(Expr::parse(s));
    for (const auto& s : jump) g.push_back(Expr::parse(s));
    return ImpulsiveSystem(n, m, std::move(f), std::move(g));
  }

  int state_dim() const { return n_; }
  int input_dim() const { return m_; }
  const std::vector<Expr>& flow() const { return flow_; }
  const std::vector<Expr>& jump() const { return jump_; }
  const std::vector<std::string>& variable_names() const { return names_; }

  // f(0,0) = 0 and g(0,0) = 0 within 1e-12.
  bool is_equilibrium_at_origin() const {
    std::vector<double> zero(static_cast<std::size_t>(n_ + m_), 0.0);
    std::vector<double> out(static_cast<std::size_t>(n_));
    std::vector<double> scratch;
    eval_flow(zero, out, scratch);
    for (double v : out)
      if (std::fabs(v) > 1e-12) return false;
    eval_jump(zero, out, scratch);
    for (double v : out)
      if (std::fabs(v) > 1e-12) return false;
    return true;
  }

  void eval_flow(std::span<const double> xu, std::vector<double>& out,
                 std::vector<double>& scratch) const {
    out.resize(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i)
      out[static_cast<std::size_t>(i)] = flow_[static_cast<std::size_t>(i)]
          .eval_slotted(xu, flow_slots_[static_cast<std::size_t>(i)], scratch);
  }

  void eval_jump(std::span<const double> xu, std::vector<double>& out,
                 std::vector<double>& scratch) const {
    out.resize(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i)
      out[static_cast<std::size_t>(i)] = jump_[static_cast<std::size_t>(i)]
          .eval_slotted(xu, jump_slots_[static_cast<std::size_t>(i)], scratch);
  }

 private:
  int n_, m_;
  std::vector<Expr> flow_, jump_;
  std::vector<std::string> names_;
  std::vector<std::vector<int>> flow_slots_, jump_slots_;
};

struct TrajectoryPoint {
  double t;
  std::vector<double> x;
  bool pre_jump = false;  // x^-(t_i) row at an impulse time
};

struct HybridTrajectory {
  std::vector<TrajectoryPoint> points;
  double step = 0.0;
  ImpulseSequence sequence;
  std::optional<double> blowup_time;  // |x| exceeded the divergence cutoff

  const std::vector<double>& final_state() const { return points.back().x; }

  double max_norm() const {
    double best = 0.0;
    for (const auto& p : points) {
      double s = 0.0;
      for (double c : p.x) s += c * c;
      best = std::max(best, std::sqrt(s));
    }
    return best;
  }

  // Schema: t,x1,...,xn,pre_jump. Two rows share each impulse time
  // (pre-jump then post-jump).
  void to_csv(std::ostream& out) const {
    out << "t";
    if (!points.empty())
      for (std::size_t i = 0; i < points[0].x.size(); ++i)
        out << ",x" << i + 1;
    out << ",pre_jump\n";
    out << std::setprecision(17);
    for (const auto& p : points) {
      out << p.t;
      for (double v : p.x) out << "," << v;
      out << "," << (p.pre_jump ? 1 : 0) << "\n";
    }
  }
};

struct DivergenceError : std::runtime_error {
  double time;
  explicit DivergenceError(double t)
      : std::runtime_error("state diverged at t = " + std::to_string(t)),
        time(t) {}
};

inline constexpr double kDivergenceCutoff = 1e12;

inline HybridTrajectory simulate(const ImpulsiveSystem& sys,
                                 std::vector<double> x0, double t0,
                                 const InputSignal& u,
                                 const ImpulseSequence& seq, double horizon,
                                 double step) {
  if (!(step > 0.0)) throw std::invalid_argument("step must be positive");
  if (!(horizon > t0)) throw std::invalid_argument("horizon must exceed t0");
  if (static_cast<int>(x0.size()) != sys.state_dim())
    throw std::invalid_argument("x0 dimension mismatch");
  if (static_cast<int>(u.dimension()) != sys.input_dim())
    throw std::invalid_argument("input dimension mismatch");
  seq.validate();
  for (double ti : seq.times)
    if (ti <= t0 || ti > horizon + 1e-12 * std::max(1.0, std::fabs(horizon)))
      throw std::invalid_argument("impulse times must lie in (t0, horizon]");

  const int n = sys.state_dim();
  const int m = sys.input_dim();

  // segment boundaries: impulse times plus interior input breakpoints
  std::vector<double> events = seq.times;
  for (double b : u.breakpoints())
    if (b > t0 && b < horizon) events.push_back(b);
  events.push_back(horizon);
  std::sort(events.begin(), events.end());
  events.erase(std::unique(events.begin(), events.end()), events.end());

  HybridTrajectory traj;
  traj.step = step;
  traj.sequence = seq;
  traj.points.push_back({t0, x0, false});

  std::vector<double> xu(static_cast<std::size_t>(n + m));
  std::vector<double> k1, k2, k3, k4, xtmp(x0.size());
  std::vector<double> scratch;

  auto blown = [&](const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) {
      if (!std::isfinite(v)) return true;
      s += v * v;
    }
    return std::sqrt(s) > kDivergenceCutoff;
  };

  auto rk4_step = [&](std::vector<double>& x, double /*t*/, double h,
                      const std::vector<double>& uval) {
    auto deriv = [&](const std::vector<double>& xs, std::vector<double>& out) {
      std::copy(xs.begin(), xs.end(), xu.begin());
      std::copy(uval.begin(), uval.end(), xu.begin() + n);
      sys.eval_flow(xu, out, scratch);
    };
    deriv(x, k1);
    for (std::size_t i = 0; i < x.size(); ++i) xtmp[i] = x[i] + 0.5 * h * k1[i];
    deriv(xtmp, k2);
    for (std::size_t i = 0; i < x.size(); ++i) xtmp[i] = x[i] + 0.5 * h * k2[i];
    deriv(xtmp, k3);
    for (std::size_t i = 0; i < x.size(); ++i) xtmp[i] = x[i] + h * k3[i];
    deriv(xtmp, k4);
    for (std::size_t i = 0; i < x.size(); ++i)
      x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  };

  std::vector<double> x = std::move(x0);
  double t = t0;
  std::size_t impulse_idx = 0;
  for (double end : events) {
    if (end <= t) continue;
    // integrate [t, end] in substeps of `step`, last one shortened
    const std::vector<double>& uval = u.value_at(t);
    while (t < end) {
      const double h = std::min(step, end - t);
      rk4_step(x, t, h, uval);
      t = (end - t <= step) ? end : t + h;
      if (blown(x)) {
        traj.points.push_back({t, x, false});
        traj.blowup_time = t;
        return traj;
      }
      traj.points.push_back({t, x, false});
    }
    t = end;
    // impulse at this boundary?
    if (impulse_idx < seq.times.size() && seq.times[impulse_idx] == end) {
      ++impulse_idx;
      traj.points.back().pre_jump = true;
      const std::vector<double>& um = u.left_limit(end);
      std::copy(x.begin(), x.end(), xu.begin());
      std::copy(um.begin(), um.end(), xu.begin() + n);
      std::vector<double> xpost;
      sys.eval_jump(xu, xpost, scratch);
      x = std::move(xpost);
      traj.points.push_back({end, x, false});
      if (blown(x)) {
        traj.blowup_time = end;
        return traj;
      }
    }
  }
  return traj;
}

}  // namespace impiss
