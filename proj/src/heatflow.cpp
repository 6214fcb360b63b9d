#include "srf/heatflow.hpp"

#include "srf/errors.hpp"

#include <boost/numeric/odeint/stepper/controlled_runge_kutta.hpp>
#include <boost/numeric/odeint/stepper/generation.hpp>
#include <boost/numeric/odeint/stepper/runge_kutta_dopri5.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace srf {

namespace odeint = boost::numeric::odeint;

const char* to_string(Direction d) {
  return d == Direction::forward ? "forward" : "backward";
}

const char* to_string(Side s) {
  return s == Side::collapse ? "collapse" : "spawn";
}

namespace {

using State = std::vector<double>;

// Smallest ε relative to the interval length; log-time integration down to
// this distance costs a few hundred units of log-time at most.
constexpr double kMinRelativeEpsilon = 1e-280;
// Coefficient standing in for poles of order > 1, whose within-class decay is
// faster than any power of the distance.
constexpr double kSteepPoleCoefficient = 1e3;

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

State to_state(const Vector& v) { return State(v.data(), v.data() + v.size()); }

Vector to_vector(const State& s) {
  return Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size()));
}

// Spectral gap of the reversible chain with off-diagonal rates c on weights w.
double spectral_gap(const Matrix& c, const Vector& w) {
  const Eigen::Index n = c.rows();
  if (n < 2) return std::numeric_limits<double>::infinity();
  Matrix g = generator_from_offdiagonal(c);
  Matrix sym(n, n);
  for (Eigen::Index x = 0; x < n; ++x)
    for (Eigen::Index y = 0; y < n; ++y) sym(x, y) = std::sqrt(w(x) / w(y)) * g(x, y);
  sym = 0.5 * (sym + sym.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(-sym, Eigen::EigenvaluesOnly);
  return std::max(eig.eigenvalues()(1), 0.0);
}

const std::vector<int>& side_map(const SingularTransition& tr, Side side) {
  return side == Side::collapse ? tr.collapse_map : tr.spawn_map;
}

// The interval adjacent to transition i on the given side, if any.
const IntervalSpec* side_interval(const SingularFlow& flow, int i, Side side) {
  const int k = side == Side::collapse ? i - 1 : i;
  if (k < 0 || k >= flow.num_intervals()) return nullptr;
  return &flow.interval(k);
}

End side_end(Side side) { return side == Side::collapse ? End::finish : End::start; }

// A point of an interval: either an absolute time or an exact distance from
// one of its endpoints (which may be below the resolution of the time).
struct Point {
  double t = 0.0;
  int anchor = 0;  // 0 absolute, -1 distance from start, +1 distance from end
  double d = 0.0;
};

Point absolute(double t) { return {t, 0, 0.0}; }

Point near_start(const IntervalSpec& iv, double d) { return {iv.t_start + d, -1, d}; }

Point near_end(const IntervalSpec& iv, double d) { return {iv.t_end - d, +1, d}; }

double distance_from_start(const IntervalSpec& iv, const Point& p) {
  return p.anchor == -1 ? p.d : p.t - iv.t_start;
}

double distance_from_end(const IntervalSpec& iv, const Point& p) {
  return p.anchor == +1 ? p.d : iv.t_end - p.t;
}

enum class ZoneKind { linear, near_start, near_end };

struct Zone {
  ZoneKind kind;
  double lo;  // absolute times of the zone boundaries
  double hi;
};

// Log-time zones cover a quarter of the interval next to each exploding end.
std::vector<Zone> zones_of(const IntervalSpec& iv) {
  const double len = iv.t_end - iv.t_start;
  const bool ps = iv.has_poles(End::start);
  const bool pe = iv.has_poles(End::finish);
  const double a = ps ? iv.t_start + 0.25 * len : iv.t_start;
  const double b = pe ? iv.t_end - 0.25 * len : iv.t_end;
  std::vector<Zone> z;
  if (ps) z.push_back({ZoneKind::near_start, iv.t_start, a});
  z.push_back({ZoneKind::linear, a, b});
  if (pe) z.push_back({ZoneKind::near_end, b, iv.t_end});
  return z;
}

// Integration of one interval in one direction, with the step budget and
// sample recording shared across zones.
class IntervalRun {
 public:
  IntervalRun(const IntervalSpec& iv, Direction dir, const HeatOptions& opt, double atol,
              long& steps, long& rejected)
      : iv_(iv), dir_(dir), opt_(opt), atol_(atol), steps_(steps), rejected_(rejected) {}

  // Integrates y from p to q (q later than p in the direction of travel) and
  // appends interior grid samples to the segment.
  void run(const Point& p, const Point& q, Vector& y, TrajectorySegment& seg) {
    const std::vector<Zone> zones = zones_of(iv_);
    const bool fwd = dir_ == Direction::forward;
    const double len = iv_.t_end - iv_.t_start;
    const int n = std::max(opt_.samples_per_interval, 2);
    const double lo_t = std::min(p.t, q.t);
    const double hi_t = std::max(p.t, q.t);
    const double guard = 1e-12 * len;
    std::vector<double> grid;
    for (int j = 0; j < n; ++j) {
      const double tj = iv_.t_start + len * j / (n - 1);
      if (tj > lo_t + guard && tj < hi_t - guard) grid.push_back(tj);
    }
    if (!fwd) std::reverse(grid.begin(), grid.end());

    State x = to_state(y);
    std::vector<Zone> order = zones;
    if (!fwd) std::reverse(order.begin(), order.end());
    for (const Zone& z : order) {
      // Sub-range of [p,q] inside the zone, as points.
      const bool has_overlap = z.hi > lo_t && z.lo < hi_t;
      if (!has_overlap) continue;
      const Point zl = absolute(z.lo), zh = absolute(z.hi);
      // Endpoints may be anchored at sub-resolution distances, so compare
      // inclusively and keep the exact point whenever it lies in the zone.
      const Point from = fwd ? (p.t >= z.lo ? p : zl) : (p.t <= z.hi ? p : zh);
      const Point to = fwd ? (q.t <= z.hi ? q : zh) : (q.t >= z.lo ? q : zl);
      std::vector<double> targets;
      std::vector<double> kept;
      for (double tj : grid)
        if (tj > z.lo && tj <= z.hi && tj > lo_t && tj < hi_t) kept.push_back(tj);
      const double v0 = coordinate(z, from);
      const double v1 = coordinate(z, to);
      if (!(v1 >= v0)) continue;
      for (double tj : kept) targets.push_back(coordinate(z, absolute(tj)));
      targets.push_back(v1);
      integrate(z, x, v0, targets, kept, seg);
    }
    y = to_vector(x);
  }

 private:
  // Monotone coordinate along the direction of travel inside a zone.
  double coordinate(const Zone& z, const Point& p) const {
    const double o = dir_ == Direction::forward ? 1.0 : -1.0;
    switch (z.kind) {
      case ZoneKind::linear:
        return o * p.t;
      case ZoneKind::near_start:
        return o * std::log(distance_from_start(iv_, p));
      case ZoneKind::near_end:
        return -o * std::log(distance_from_end(iv_, p));
    }
    return 0.0;
  }

  // |dt/dv|·M(t) with M = generator (forward) or its transpose (backward).
  Matrix scaled_operator(const Zone& z, double v) const {
    const double o = dir_ == Direction::forward ? 1.0 : -1.0;
    Matrix q;
    switch (z.kind) {
      case ZoneKind::linear:
        q = iv_.rates_at(o * v);
        break;
      case ZoneKind::near_start: {
        const double d = std::exp(o * v);
        q = d * iv_.rates_near(End::start, d);
        break;
      }
      case ZoneKind::near_end: {
        const double d = std::exp(-o * v);
        q = d * iv_.rates_near(End::finish, d);
        break;
      }
    }
    Matrix g = generator_from_offdiagonal(q);
    if (dir_ == Direction::backward) g.transposeInPlace();
    return g;
  }

  void integrate(const Zone& z, State& x, double v0, const std::vector<double>& targets,
                 const std::vector<double>& sample_times, TrajectorySegment& seg) {
    auto system = [&](const State& in, State& out, double v) {
      const Matrix m = scaled_operator(z, v);
      const Eigen::Map<const Vector> yin(in.data(), static_cast<Eigen::Index>(in.size()));
      out.resize(in.size());
      Eigen::Map<Vector> yout(out.data(), static_cast<Eigen::Index>(out.size()));
      yout.noalias() = m * yin;
    };
    auto stepper = odeint::make_controlled(atol_, opt_.rtol, odeint::runge_kutta_dopri5<State>());
    double v = v0;
    const double span = std::max(std::abs(targets.back() - v0), 1e-300);
    double dt = std::min(span, 1e-3 * std::max(span, 1.0));
    for (size_t k = 0; k < targets.size(); ++k) {
      const double target = targets[k];
      while (v < target) {
        const bool last = dt >= target - v;
        const double trial = last ? target - v : dt;
        double step = trial;
        double vv = v;
        const odeint::controlled_step_result r = stepper.try_step(system, x, vv, step);
        if (r == odeint::success) {
          ++steps_;
          v = last ? target : vv;
          // Keep the controller's suggestion unless the step was clipped.
          if (!last || step > dt) dt = step;
        } else {
          ++rejected_;
          dt = step;
        }
        if (steps_ + rejected_ > opt_.max_steps)
          throw numerical_failure("heat flow: step budget exhausted near t=" + fmt(time_of(z, v)));
        if (!(dt > 1e-15 * std::max(1.0, std::abs(v))))
          throw numerical_failure("heat flow: step size underflow near t=" + fmt(time_of(z, v)));
        for (double xi : x)
          if (!std::isfinite(xi))
            throw numerical_failure("heat flow: non-finite state near t=" + fmt(time_of(z, v)));
      }
      if (k < sample_times.size()) {
        seg.times.push_back(sample_times[k]);
        seg.values.push_back(to_vector(x));
      }
    }
  }

  double time_of(const Zone& z, double v) const {
    const double o = dir_ == Direction::forward ? 1.0 : -1.0;
    switch (z.kind) {
      case ZoneKind::linear:
        return o * v;
      case ZoneKind::near_start:
        return iv_.t_start + std::exp(o * v);
      case ZoneKind::near_end:
        return iv_.t_end - std::exp(-o * v);
    }
    return 0.0;
  }

  const IntervalSpec& iv_;
  Direction dir_;
  const HeatOptions& opt_;
  double atol_;
  long& steps_;
  long& rejected_;
};

void check_options(const HeatOptions& o) {
  if (!(o.rtol > 0.0) || !(o.atol >= 0.0) || !(o.projection_tolerance > 0.0) ||
      o.samples_per_interval < 2 || o.max_steps < 1)
    throw contract_error("heat flow: invalid options");
}

void check_times(const SingularFlow& flow, double s, double t) {
  if (!(s <= t)) throw contract_error("heat flow: need s <= t (got s=" + fmt(s) + ", t=" + fmt(t) + ")");
  const double tol = 1e-14 * std::max(1.0, std::abs(flow.t_end()));
  if (s < flow.t_start() - tol || t > flow.t_end() + tol)
    throw contract_error("heat flow: times outside [" + fmt(flow.t_start()) + ", " +
                         fmt(flow.t_end()) + "]");
}

void check_size(const Vector& v, size_t n, const std::string& what) {
  if (static_cast<size_t>(v.size()) != n)
    throw contract_error("heat flow: " + what + " has " + std::to_string(v.size()) +
                         " entries, expected " + std::to_string(n));
}

BoundaryValue& boundary(HeatSolution& sol, int i, double time) {
  for (BoundaryValue& b : sol.boundaries)
    if (b.transition == i) return b;
  sol.boundaries.push_back({i, time, Vector(), std::nullopt, std::nullopt});
  return sol.boundaries.back();
}

// Within-class disequilibrium of a state at distance ε from a singular time.
double spread(const Vector& state, const std::vector<int>& map, int m, const Vector& pibar,
              Direction dir) {
  double out = 0.0;
  for (const std::vector<int>& cls : fibers(map, m)) {
    if (dir == Direction::forward) {
      double lo = state(cls.front()), hi = lo;
      for (int x : cls) {
        lo = std::min(lo, state(x));
        hi = std::max(hi, state(x));
      }
      out = std::max(out, hi - lo);
    } else {
      double mass = 0.0;
      for (int x : cls) mass += state(x);
      for (int x : cls) out = std::max(out, std::abs(state(x) - pibar(x) * mass));
    }
  }
  return out;
}

double state_scale(const Vector& v) {
  const double m = v.size() ? v.cwiseAbs().maxCoeff() : 0.0;
  return m > 0.0 ? m : 1.0;
}

}  // namespace

Vector singular_transition_apply(const SingularTransition& tr, const Vector& fine_pi,
                                 const Vector& state, Direction direction, Side side) {
  const std::vector<int>& map = side_map(tr, side);
  const int m = tr.size();
  const Eigen::Index fine = static_cast<Eigen::Index>(map.size());
  if (map.empty())
    throw contract_error("singular_transition_apply: transition at t=" + fmt(tr.time) +
                         " has no " + to_string(side) + " side");
  const bool to_boundary = (direction == Direction::forward) == (side == Side::collapse);
  check_size(state, static_cast<size_t>(to_boundary ? fine : m), "transition input");
  if (side == Side::collapse) check_size(fine_pi, static_cast<size_t>(fine), "fine measure");

  if (direction == Direction::forward && side == Side::spawn) {
    Vector out(fine);
    for (Eigen::Index x = 0; x < fine; ++x) out(x) = state(map[static_cast<size_t>(x)]);
    return out;
  }
  if (direction == Direction::backward && side == Side::spawn) {
    Vector out = Vector::Zero(m);
    for (Eigen::Index x = 0; x < fine; ++x) out(map[static_cast<size_t>(x)]) += state(x);
    return out;
  }
  const Vector pibar = local_equilibrium(fine_pi, map, m);
  if (direction == Direction::forward) {
    Vector out = Vector::Zero(m);
    for (Eigen::Index x = 0; x < fine; ++x) out(map[static_cast<size_t>(x)]) += pibar(x) * state(x);
    return out;
  }
  Vector out(fine);
  for (Eigen::Index x = 0; x < fine; ++x) out(x) = pibar(x) * state(map[static_cast<size_t>(x)]);
  return out;
}

Vector singular_transition_apply(const SingularFlow& flow, int transition, const Vector& state,
                                 Direction direction, Side side) {
  const IntervalSpec* iv = side_interval(flow, transition, side);
  if (!iv)
    throw contract_error("singular_transition_apply: transition " + std::to_string(transition) +
                         " has no " + to_string(side) + " side");
  const Vector pi = side == Side::collapse ? iv->limit_pi(End::finish) : Vector();
  return singular_transition_apply(flow.transition(transition), pi, state, direction, side);
}

ProjectionRecord projection_epsilon(const SingularFlow& flow, int transition, Side side,
                                    double tolerance) {
  ProjectionRecord rec;
  rec.transition = transition;
  rec.side = side;
  const IntervalSpec* iv = side_interval(flow, transition, side);
  if (!iv) return rec;
  const End end = side_end(side);
  if (!iv->has_poles(end)) return rec;

  const SingularTransition& tr = flow.transition(transition);
  const std::vector<int>& map = side_map(tr, side);
  const Vector pi = iv->limit_pi(end);
  const double tau = end == End::finish ? iv->t_end : iv->t_start;
  const int n = iv->size();

  // Pole coefficients inside classes and the largest finite exit rate.
  Matrix coef = Matrix::Zero(n, n);
  Vector finite_out = Vector::Zero(n);
  for (const EdgeSchedule& e : iv->edges) {
    const EndBehaviour b =
        end == End::finish ? e.schedule.limit_left(tau) : e.schedule.limit_right(tau);
    if (b.infinite)
      coef(e.from, e.to) = b.order == 1.0 ? b.coefficient : kSteepPoleCoefficient;
    else
      finite_out(e.from) += std::abs(b.value);
  }
  double gap = std::numeric_limits<double>::infinity();
  for (const std::vector<int>& cls : fibers(map, tr.size())) {
    if (cls.size() < 2) continue;
    const Eigen::Index k = static_cast<Eigen::Index>(cls.size());
    Matrix c(k, k);
    Vector w(k);
    for (Eigen::Index a = 0; a < k; ++a) {
      w(a) = pi(cls[static_cast<size_t>(a)]);
      for (Eigen::Index b = 0; b < k; ++b)
        c(a, b) = a == b ? 0.0 : coef(cls[static_cast<size_t>(a)], cls[static_cast<size_t>(b)]);
    }
    gap = std::min(gap, spectral_gap(c, w));
  }
  const double len = iv->t_end - iv->t_start;
  const double drift_rate = std::max(finite_out.maxCoeff(), 1e-300);
  double rel = std::min(1e-2, tolerance / (drift_rate * len));
  if (gap > 0.0 && std::isfinite(gap)) rel = std::min(rel, std::pow(tolerance, 1.0 / gap));
  if (gap <= 0.0) rel = kMinRelativeEpsilon;
  rel = std::max(rel, kMinRelativeEpsilon);
  rec.epsilon = rel * len;
  rec.equilibration_error = std::isfinite(gap) ? std::pow(rel, gap) : 0.0;
  rec.drift_error = rec.epsilon * finite_out.maxCoeff();
  return rec;
}

HeatSolution propagate(const SingularFlow& flow, double s, double t, const Vector& psi,
                       const HeatOptions& options) {
  check_options(options);
  check_times(flow, s, t);
  HeatSolution sol;
  sol.flow = &flow;
  sol.direction = Direction::forward;
  sol.s = s;
  sol.t = t;
  sol.initial = psi;
  const double atol = options.atol * state_scale(psi);

  const std::optional<int> ts = flow.transition_at(s);
  const std::optional<int> tt = flow.transition_at(t);
  Vector y = psi;
  // Cursor: at a transition (boundary set) or inside an interval at a point.
  bool at_transition = ts.has_value();
  int index = ts ? *ts : flow.interval_at(s);
  check_size(psi, flow.states_at(s).size(), "initial function");
  Point p = absolute(s);

  if (s == t || (ts && tt && *ts == *tt)) {
    sol.result = y;
    sol.result_states = flow.states_at(s);
    if (ts) boundary(sol, *ts, flow.transition(*ts).time).value = y;
    return sol;
  }

  while (true) {
    if (at_transition) {
      const int i = index;
      const SingularTransition& tr = flow.transition(i);
      BoundaryValue& bv = boundary(sol, i, tr.time);
      bv.value = y;
      if (tt && *tt == i) {
        sol.result = y;
        sol.result_states = tr.states;
        break;
      }
      ProjectionRecord rec = projection_epsilon(flow, i, Side::spawn, options.projection_tolerance);
      const IntervalSpec& iv = flow.interval(i);
      y = singular_transition_apply(tr, Vector(), y, Direction::forward, Side::spawn);
      bv.right = y;
      sol.projections.push_back(rec);
      at_transition = false;
      index = i;
      p = near_start(iv, rec.epsilon);
      sol.segments.push_back({i, {iv.t_start}, {y}});
      continue;
    }
    const int k = index;
    const IntervalSpec& iv = flow.interval(k);
    TrajectorySegment& seg = sol.segments.empty() || sol.segments.back().interval != k
                                 ? (sol.segments.push_back({k, {p.t}, {y}}), sol.segments.back())
                                 : sol.segments.back();
    ProjectionRecord rec =
        projection_epsilon(flow, k + 1, Side::collapse, options.projection_tolerance);
    const bool crosses = tt ? *tt > k : t > iv.t_end;
    Point q = crosses ? near_end(iv, rec.epsilon) : absolute(t);
    if (!crosses && iv.t_end - t < rec.epsilon) q = near_end(iv, rec.epsilon);
    if (distance_from_start(iv, q) > distance_from_start(iv, p)) {
      IntervalRun run(iv, Direction::forward, options, atol, sol.steps, sol.rejected_steps);
      run.run(p, q, y, seg);
    }
    seg.times.push_back(crosses ? iv.t_end : t);
    seg.values.push_back(y);
    if (!crosses) {
      sol.result = y;
      sol.result_states = iv.states;
      break;
    }
    const SingularTransition& tr = flow.transition(k + 1);
    const Vector pi = iv.limit_pi(End::finish);
    rec.spread = spread(y, tr.collapse_map, tr.size(), Vector(), Direction::forward);
    sol.projections.push_back(rec);
    BoundaryValue& bv = boundary(sol, k + 1, tr.time);
    bv.left = y;
    y = singular_transition_apply(tr, pi, y, Direction::forward, Side::collapse);
    at_transition = true;
    index = k + 1;
  }
  return sol;
}

HeatSolution propagate_dual(const SingularFlow& flow, double s, double t, const Vector& sigma,
                            const HeatOptions& options) {
  check_options(options);
  check_times(flow, s, t);
  HeatSolution sol;
  sol.flow = &flow;
  sol.direction = Direction::backward;
  sol.s = s;
  sol.t = t;
  sol.initial = sigma;
  const double atol = options.atol * state_scale(sigma);

  const std::optional<int> ts = flow.transition_at(s);
  const std::optional<int> tt = flow.transition_at(t);
  Vector y = sigma;
  bool at_transition = tt.has_value();
  int index = tt ? *tt : flow.interval_at(t);
  check_size(sigma, flow.states_at(t).size(), "initial measure");
  Point p = absolute(t);

  if (s == t || (ts && tt && *ts == *tt)) {
    sol.result = y;
    sol.result_states = flow.states_at(t);
    if (tt) boundary(sol, *tt, flow.transition(*tt).time).value = y;
    return sol;
  }

  while (true) {
    if (at_transition) {
      const int i = index;
      const SingularTransition& tr = flow.transition(i);
      BoundaryValue& bv = boundary(sol, i, tr.time);
      bv.value = y;
      if (ts && *ts == i) {
        sol.result = y;
        sol.result_states = tr.states;
        break;
      }
      ProjectionRecord rec =
          projection_epsilon(flow, i, Side::collapse, options.projection_tolerance);
      const IntervalSpec& iv = flow.interval(i - 1);
      y = singular_transition_apply(tr, iv.limit_pi(End::finish), y, Direction::backward,
                                    Side::collapse);
      bv.left = y;
      sol.projections.push_back(rec);
      at_transition = false;
      index = i - 1;
      p = near_end(iv, rec.epsilon);
      sol.segments.push_back({i - 1, {iv.t_end}, {y}});
      continue;
    }
    const int k = index;
    const IntervalSpec& iv = flow.interval(k);
    TrajectorySegment& seg = sol.segments.empty() || sol.segments.back().interval != k
                                 ? (sol.segments.push_back({k, {p.t}, {y}}), sol.segments.back())
                                 : sol.segments.back();
    ProjectionRecord rec = projection_epsilon(flow, k, Side::spawn, options.projection_tolerance);
    const bool crosses = ts ? *ts <= k : s < iv.t_start;
    Point q = crosses ? near_start(iv, rec.epsilon) : absolute(s);
    if (!crosses && s - iv.t_start < rec.epsilon) q = near_start(iv, rec.epsilon);
    if (distance_from_end(iv, q) > distance_from_end(iv, p)) {
      IntervalRun run(iv, Direction::backward, options, atol, sol.steps, sol.rejected_steps);
      run.run(p, q, y, seg);
    }
    seg.times.push_back(crosses ? iv.t_start : s);
    seg.values.push_back(y);
    if (!crosses) {
      sol.result = y;
      sol.result_states = iv.states;
      break;
    }
    const SingularTransition& tr = flow.transition(k);
    rec.spread = spread(y, tr.spawn_map, tr.size(), local_equilibrium(iv.limit_pi(End::start),
                                                                      tr.spawn_map, tr.size()),
                        Direction::backward);
    sol.projections.push_back(rec);
    BoundaryValue& bv = boundary(sol, k, tr.time);
    bv.right = y;
    y = singular_transition_apply(tr, Vector(), y, Direction::backward, Side::spawn);
    at_transition = true;
    index = k;
  }

  // Report segments, boundaries and projections in increasing time.
  for (TrajectorySegment& seg : sol.segments) {
    std::reverse(seg.times.begin(), seg.times.end());
    std::reverse(seg.values.begin(), seg.values.end());
  }
  std::reverse(sol.segments.begin(), sol.segments.end());
  std::reverse(sol.boundaries.begin(), sol.boundaries.end());
  std::reverse(sol.projections.begin(), sol.projections.end());
  return sol;
}

}  // namespace srf
