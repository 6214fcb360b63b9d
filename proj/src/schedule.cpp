#include "srf/schedule.hpp"

#include "srf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace srf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool near_time(double a, double b) {
  return std::abs(a - b) <= 1e-14 * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

bool chained(double a, double b) {
  return std::abs(a - b) <= 1e-12 * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

// Index k with times[k] <= t < times[k+1], clamped to [0, n-2].
size_t segment_of(const std::vector<double>& times, double t) {
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  size_t k = static_cast<size_t>(std::max<std::ptrdiff_t>(it - times.begin() - 1, 0));
  return std::min(k, times.size() - 2);
}

void require_table(const std::vector<double>& times, const std::vector<double>& values,
                   const char* who) {
  if (times.size() < 2 || times.size() != values.size())
    throw contract_error(std::string(who) + ": need at least two (time, value) samples");
  for (size_t k = 1; k < times.size(); ++k)
    if (!(times[k] > times[k - 1]))
      throw contract_error(std::string(who) + ": sample times must increase strictly");
}

}  // namespace

// ---------------------------------------------------------------------------
// RateSchedule

RateSchedule RateSchedule::constant(double c) {
  RateParams p;
  p.c = c;
  return RateSchedule(RateKind::constant, p);
}

RateSchedule RateSchedule::affine(double a, double b) {
  RateParams p;
  p.a = a;
  p.b = b;
  return RateSchedule(RateKind::affine, p);
}

RateSchedule RateSchedule::soliton_scaled(double c, double kappa, double t_ref, double scale) {
  RateParams p;
  p.c = c;
  p.kappa = kappa;
  p.t_ref = t_ref;
  p.scale = scale;
  return RateSchedule(RateKind::soliton_scaled, p);
}

RateSchedule RateSchedule::collapse_pole(double c, double t_pole, double order) {
  if (!(order > 0.0)) throw contract_error("collapse_pole: order must be positive");
  RateParams p;
  p.c = c;
  p.t_pole = t_pole;
  p.order = order;
  return RateSchedule(RateKind::collapse_pole, p);
}

RateSchedule RateSchedule::spawn_pole(double c, double t_pole, double order) {
  if (!(order > 0.0)) throw contract_error("spawn_pole: order must be positive");
  RateParams p;
  p.c = c;
  p.t_pole = t_pole;
  p.order = order;
  return RateSchedule(RateKind::spawn_pole, p);
}

RateSchedule RateSchedule::tabulated(std::vector<double> times, std::vector<double> values) {
  require_table(times, values, "tabulated rate");
  const bool all_zero = std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
  const bool all_pos = std::all_of(values.begin(), values.end(), [](double v) { return v > 0.0; });
  if (!all_zero && !all_pos)
    throw contract_error("tabulated rate: samples must be all positive or all zero");
  RateParams p;
  p.times = std::move(times);
  p.values = std::move(values);
  return RateSchedule(RateKind::tabulated, p);
}

double RateSchedule::soliton_denominator(double t) const {
  return 1.0 - 2.0 * p_.kappa * p_.scale * (t - p_.t_ref);
}

double RateSchedule::value(double t) const {
  switch (kind_) {
    case RateKind::constant:
      return p_.c;
    case RateKind::affine:
      return p_.a + p_.b * t;
    case RateKind::soliton_scaled:
      return p_.c / soliton_denominator(t);
    case RateKind::collapse_pole: {
      const double d = p_.t_pole - t;
      return p_.order == 1.0 ? p_.c / d : p_.c / std::pow(d, p_.order);
    }
    case RateKind::spawn_pole: {
      const double d = t - p_.t_pole;
      return p_.order == 1.0 ? p_.c / d : p_.c / std::pow(d, p_.order);
    }
    case RateKind::tabulated: {
      if (p_.values.front() == 0.0) return 0.0;
      if (t <= p_.times.front()) return p_.values.front();
      if (t >= p_.times.back()) return p_.values.back();
      const size_t k = segment_of(p_.times, t);
      const double w = (t - p_.times[k]) / (p_.times[k + 1] - p_.times[k]);
      return std::exp((1.0 - w) * std::log(p_.values[k]) + w * std::log(p_.values[k + 1]));
    }
  }
  return 0.0;
}

double RateSchedule::derivative(double t) const {
  switch (kind_) {
    case RateKind::constant:
      return 0.0;
    case RateKind::affine:
      return p_.b;
    case RateKind::soliton_scaled: {
      const double d = soliton_denominator(t);
      return p_.c * 2.0 * p_.kappa * p_.scale / (d * d);
    }
    case RateKind::collapse_pole: {
      const double d = p_.t_pole - t;
      return p_.c * p_.order / std::pow(d, p_.order + 1.0);
    }
    case RateKind::spawn_pole: {
      const double d = t - p_.t_pole;
      return -p_.c * p_.order / std::pow(d, p_.order + 1.0);
    }
    case RateKind::tabulated:
      throw contract_error("tabulated rate schedule has no analytic derivative");
  }
  return 0.0;
}

double RateSchedule::value_near(double tau, End side, double d) const {
  const double sign = side == End::finish ? -1.0 : 1.0;
  const double t = tau + sign * d;
  switch (kind_) {
    case RateKind::collapse_pole:
      if (side == End::finish && near_time(tau, p_.t_pole))
        return p_.order == 1.0 ? p_.c / d : p_.c / std::pow(d, p_.order);
      break;
    case RateKind::spawn_pole:
      if (side == End::start && near_time(tau, p_.t_pole))
        return p_.order == 1.0 ? p_.c / d : p_.c / std::pow(d, p_.order);
      break;
    case RateKind::soliton_scaled:
      if (std::abs(soliton_denominator(tau)) <= 1e-13)
        return p_.c / (-2.0 * p_.kappa * p_.scale * sign * d);
      break;
    default:
      break;
  }
  return value(t);
}

EndBehaviour RateSchedule::limit_left(double tau) const {
  EndBehaviour e;
  if (kind_ == RateKind::collapse_pole && near_time(tau, p_.t_pole) && p_.c != 0.0) {
    e.infinite = true;
    e.order = p_.order;
    e.coefficient = p_.c;
    return e;
  }
  if (kind_ == RateKind::soliton_scaled && p_.c != 0.0 && p_.kappa * p_.scale != 0.0 &&
      std::abs(soliton_denominator(tau)) <= 1e-13) {
    e.infinite = true;
    e.order = 1.0;
    e.coefficient = p_.c / std::abs(2.0 * p_.kappa * p_.scale);
    return e;
  }
  e.value = value(tau);
  return e;
}

EndBehaviour RateSchedule::limit_right(double tau) const {
  EndBehaviour e;
  if (kind_ == RateKind::spawn_pole && near_time(tau, p_.t_pole) && p_.c != 0.0) {
    e.infinite = true;
    e.order = p_.order;
    e.coefficient = p_.c;
    return e;
  }
  if (kind_ == RateKind::soliton_scaled && p_.c != 0.0 && p_.kappa * p_.scale != 0.0 &&
      std::abs(soliton_denominator(tau)) <= 1e-13) {
    e.infinite = true;
    e.order = 1.0;
    e.coefficient = p_.c / std::abs(2.0 * p_.kappa * p_.scale);
    return e;
  }
  e.value = value(tau);
  return e;
}

double RateSchedule::integral(double a, double b) const {
  if (b < a) return -integral(b, a);
  switch (kind_) {
    case RateKind::constant:
      return p_.c * (b - a);
    case RateKind::affine:
      return p_.a * (b - a) + 0.5 * p_.b * (b * b - a * a);
    case RateKind::soliton_scaled: {
      const double k = 2.0 * p_.kappa * p_.scale;
      if (k == 0.0) return p_.c * (b - a);
      return -p_.c / k * std::log(soliton_denominator(b) / soliton_denominator(a));
    }
    case RateKind::collapse_pole: {
      const double da = p_.t_pole - a;
      const double db = p_.t_pole - b;
      if (p_.order == 1.0) return p_.c * std::log(da / db);
      const double e = 1.0 - p_.order;
      return p_.c * (std::pow(da, e) - std::pow(db, e)) / e;
    }
    case RateKind::spawn_pole: {
      const double da = a - p_.t_pole;
      const double db = b - p_.t_pole;
      if (p_.order == 1.0) return p_.c * std::log(db / da);
      const double e = 1.0 - p_.order;
      return p_.c * (std::pow(db, e) - std::pow(da, e)) / e;
    }
    case RateKind::tabulated: {
      if (p_.values.front() == 0.0) return 0.0;
      // Piecewise exponential between samples, constant beyond them.
      auto piece = [&](double lo, double hi) {
        if (hi <= lo) return 0.0;
        const double v0 = value(lo);
        const double v1 = value(hi);
        if (std::abs(v1 - v0) <= 1e-15 * v0) return v0 * (hi - lo);
        return (v1 - v0) * (hi - lo) / std::log(v1 / v0);  // (hi-lo)·Λ(v0,v1)
      };
      std::vector<double> cuts{a};
      for (double t : p_.times)
        if (t > a && t < b) cuts.push_back(t);
      cuts.push_back(b);
      double sum = 0.0;
      for (size_t k = 0; k + 1 < cuts.size(); ++k) sum += piece(cuts[k], cuts[k + 1]);
      return sum;
    }
  }
  return 0.0;
}

double RateSchedule::log_lipschitz(double a, double b) const {
  if (identically_zero()) return 0.0;
  if (kind_ == RateKind::tabulated) {
    double best = 0.0;
    for (size_t k = 0; k + 1 < p_.times.size(); ++k) {
      if (p_.times[k + 1] < a || p_.times[k] > b) continue;
      best = std::max(best, std::abs(std::log(p_.values[k + 1] / p_.values[k])) /
                                (p_.times[k + 1] - p_.times[k]));
    }
    return best;
  }
  // Every analytic kind has |Q̇/Q| monotone on a pole-free range, so the
  // supremum is attained at an endpoint.
  auto rate = [&](double t) { return std::abs(derivative(t) / value(t)); };
  return std::max(rate(a), rate(b));
}

bool RateSchedule::identically_zero() const {
  switch (kind_) {
    case RateKind::constant:
    case RateKind::soliton_scaled:
    case RateKind::collapse_pole:
    case RateKind::spawn_pole:
      return p_.c == 0.0;
    case RateKind::affine:
      return p_.a == 0.0 && p_.b == 0.0;
    case RateKind::tabulated:
      return p_.values.front() == 0.0;
  }
  return false;
}

RateSchedule RateSchedule::scaled(double factor) const {
  if (!(factor > 0.0)) throw contract_error("RateSchedule::scaled: factor must be > 0");
  RateSchedule out = *this;
  out.p_.c *= factor;
  out.p_.a *= factor;
  out.p_.b *= factor;
  for (double& v : out.p_.values) v *= factor;
  return out;
}

const char* to_string(RateKind kind) {
  switch (kind) {
    case RateKind::constant:
      return "constant";
    case RateKind::affine:
      return "affine";
    case RateKind::soliton_scaled:
      return "soliton_scaled";
    case RateKind::collapse_pole:
      return "collapse_pole";
    case RateKind::spawn_pole:
      return "spawn_pole";
    case RateKind::tabulated:
      return "tabulated";
  }
  return "?";
}

std::optional<RateKind> rate_kind_from_string(const std::string& name) {
  for (RateKind k : {RateKind::constant, RateKind::affine, RateKind::soliton_scaled,
                     RateKind::collapse_pole, RateKind::spawn_pole, RateKind::tabulated})
    if (name == to_string(k)) return k;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// PiSchedule

PiSchedule PiSchedule::constant(double v) {
  PiSchedule s(PiKind::constant);
  s.coeffs_ = {v};
  return s;
}

PiSchedule PiSchedule::affine(double a, double b) {
  PiSchedule s(PiKind::affine);
  s.coeffs_ = {a, b};
  return s;
}

PiSchedule PiSchedule::polynomial(std::vector<double> coeffs) {
  if (coeffs.empty()) throw contract_error("polynomial pi schedule needs coefficients");
  PiSchedule s(PiKind::polynomial);
  s.coeffs_ = std::move(coeffs);
  return s;
}

PiSchedule PiSchedule::tabulated(std::vector<double> times, std::vector<double> values) {
  require_table(times, values, "tabulated pi");
  PiSchedule s(PiKind::tabulated);
  s.times_ = std::move(times);
  s.values_ = std::move(values);
  return s;
}

double PiSchedule::value(double t) const {
  if (kind_ == PiKind::tabulated) {
    if (t <= times_.front()) return values_.front();
    if (t >= times_.back()) return values_.back();
    const size_t k = segment_of(times_, t);
    const double w = (t - times_[k]) / (times_[k + 1] - times_[k]);
    return (1.0 - w) * values_[k] + w * values_[k + 1];
  }
  double v = 0.0;
  for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) v = v * t + *it;
  return v;
}

double PiSchedule::derivative(double t) const {
  if (kind_ == PiKind::tabulated) {
    if (t < times_.front() || t > times_.back()) return 0.0;
    const size_t k = segment_of(times_, t);
    return (values_[k + 1] - values_[k]) / (times_[k + 1] - times_[k]);
  }
  double v = 0.0;
  for (size_t k = coeffs_.size(); k-- > 1;) v = v * t + static_cast<double>(k) * coeffs_[k];
  return v;
}

PiSchedule operator*(const PiSchedule& a, const PiSchedule& b) {
  if (a.kind_ == PiKind::tabulated || b.kind_ == PiKind::tabulated)
    throw contract_error("product of tabulated pi schedules is not supported");
  std::vector<double> c(a.coeffs_.size() + b.coeffs_.size() - 1, 0.0);
  for (size_t i = 0; i < a.coeffs_.size(); ++i)
    for (size_t j = 0; j < b.coeffs_.size(); ++j) c[i + j] += a.coeffs_[i] * b.coeffs_[j];
  while (c.size() > 1 && c.back() == 0.0) c.pop_back();
  if (c.size() == 1) return PiSchedule::constant(c[0]);
  if (c.size() == 2) return PiSchedule::affine(c[0], c[1]);
  return PiSchedule::polynomial(std::move(c));
}

const char* to_string(PiKind kind) {
  switch (kind) {
    case PiKind::constant:
      return "constant";
    case PiKind::affine:
      return "affine";
    case PiKind::polynomial:
      return "polynomial";
    case PiKind::tabulated:
      return "tabulated";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// IntervalSpec

int IntervalSpec::index_of(const std::string& name) const {
  for (int i = 0; i < size(); ++i)
    if (states[static_cast<size_t>(i)] == name) return i;
  return -1;
}

Matrix IntervalSpec::rates_at(double t) const {
  Matrix q = Matrix::Zero(size(), size());
  for (const EdgeSchedule& e : edges) q(e.from, e.to) = e.schedule.value(t);
  return q;
}

Matrix IntervalSpec::rates_near(End end, double d) const {
  const double tau = end == End::finish ? t_end : t_start;
  Matrix q = Matrix::Zero(size(), size());
  for (const EdgeSchedule& e : edges) q(e.from, e.to) = e.schedule.value_near(tau, end, d);
  return q;
}

Matrix IntervalSpec::generator_at(double t) const {
  return generator_from_offdiagonal(rates_at(t));
}

std::optional<Matrix> IntervalSpec::rate_dot_at(double t) const {
  Matrix d = Matrix::Zero(size(), size());
  for (const EdgeSchedule& e : edges) {
    if (!e.schedule.has_derivative()) return std::nullopt;
    d(e.from, e.to) = e.schedule.derivative(t);
  }
  for (int x = 0; x < size(); ++x) d(x, x) = -d.row(x).sum();
  return d;
}

Vector IntervalSpec::pi_at(double t) const {
  Vector p(size());
  for (int x = 0; x < size(); ++x) p(x) = pi[static_cast<size_t>(x)].value(t);
  return p;
}

Matrix IntervalSpec::limit_rates(End end) const {
  Matrix q = Matrix::Zero(size(), size());
  for (const EdgeSchedule& e : edges) {
    const EndBehaviour b = end == End::finish ? e.schedule.limit_left(t_end)
                                              : e.schedule.limit_right(t_start);
    q(e.from, e.to) = b.infinite ? kInf : b.value;
  }
  return q;
}

Vector IntervalSpec::limit_pi(End end) const {
  return pi_at(end == End::finish ? t_end : t_start);
}

bool IntervalSpec::has_poles(End end) const {
  for (const EdgeSchedule& e : edges) {
    const EndBehaviour b = end == End::finish ? e.schedule.limit_left(t_end)
                                              : e.schedule.limit_right(t_start);
    if (b.infinite) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// SingularTransition / SingularFlow

MarkovTriple SingularTransition::triple() const {
  std::ostringstream where;
  where << "boundary triple at t=" << fmt(time) << ": ";
  try {
    return MarkovTriple(states, rates, pi);
  } catch (const validation_error& e) {
    throw validation_error(where.str() + e.what());
  }
}

SingularFlow::SingularFlow(std::vector<IntervalSpec> intervals,
                           std::vector<SingularTransition> transitions, std::string name)
    : intervals_(std::move(intervals)), transitions_(std::move(transitions)), name_(std::move(name)) {
  const size_t n = intervals_.size();
  if (n == 0) throw contract_error("SingularFlow: no intervals");
  if (transitions_.size() != n + 1)
    throw contract_error("SingularFlow: need one transition per interval endpoint");
  for (size_t i = 0; i < n; ++i) {
    IntervalSpec& iv = intervals_[i];
    std::ostringstream loc;
    loc << "SingularFlow interval " << i << ": ";
    if (!chained(iv.t_start, transitions_[i].time) || !chained(iv.t_end, transitions_[i + 1].time))
      throw contract_error(loc.str() + "endpoints do not match the transition times");
    iv.t_start = transitions_[i].time;
    iv.t_end = transitions_[i + 1].time;
    if (!(iv.t_start < iv.t_end)) throw contract_error(loc.str() + "t_start must be < t_end");
    if (iv.states.empty()) throw contract_error(loc.str() + "empty state set");
    if (iv.pi.size() != iv.states.size())
      throw contract_error(loc.str() + "pi schedule count does not match states");
    std::set<std::pair<int, int>> seen;
    for (const EdgeSchedule& e : iv.edges) {
      if (e.from < 0 || e.to < 0 || e.from >= iv.size() || e.to >= iv.size() || e.from == e.to)
        throw contract_error(loc.str() + "edge with invalid endpoints");
      if (!seen.insert({e.from, e.to}).second)
        throw contract_error(loc.str() + "duplicate edge (" + iv.states[e.from] + "," +
                             iv.states[e.to] + ")");
    }
  }
  for (size_t i = 0; i <= n; ++i) {
    const SingularTransition& tr = transitions_[i];
    std::ostringstream loc;
    loc << "SingularFlow transition " << i << " (t=" << fmt(tr.time) << "): ";
    const int m = tr.size();
    if (m == 0) throw contract_error(loc.str() + "empty boundary state set");
    if (tr.rates.rows() != m || tr.rates.cols() != m || tr.pi.size() != m)
      throw contract_error(loc.str() + "boundary rates/pi have wrong shape");
    const size_t want_c = i == 0 ? 0 : intervals_[i - 1].states.size();
    const size_t want_s = i == n ? 0 : intervals_[i].states.size();
    if (tr.collapse_map.size() != want_c)
      throw contract_error(loc.str() + "collapse map has wrong length");
    if (tr.spawn_map.size() != want_s)
      throw contract_error(loc.str() + "spawn map has wrong length");
    for (int v : tr.collapse_map)
      if (v < 0 || v >= m) throw contract_error(loc.str() + "collapse map target out of range");
    for (int v : tr.spawn_map)
      if (v < 0 || v >= m) throw contract_error(loc.str() + "spawn map target out of range");
  }
}

std::optional<int> SingularFlow::transition_at(double t) const {
  for (size_t i = 0; i < transitions_.size(); ++i)
    if (near_time(t, transitions_[i].time)) return static_cast<int>(i);
  return std::nullopt;
}

int SingularFlow::interval_at(double t) const {
  for (size_t i = 0; i < intervals_.size(); ++i)
    if (t > intervals_[i].t_start && t < intervals_[i].t_end) return static_cast<int>(i);
  std::ostringstream os;
  os << "time " << fmt(t) << " is not inside an open interval of [" << fmt(t_start()) << ", "
     << fmt(t_end()) << "]";
  throw contract_error(os.str());
}

const std::vector<std::string>& SingularFlow::states_at(double t) const {
  if (auto i = transition_at(t)) return transitions_[static_cast<size_t>(*i)].states;
  return intervals_[static_cast<size_t>(interval_at(t))].states;
}

FlowPoint eval_at(const SingularFlow& flow, double t) {
  if (auto i = flow.transition_at(t)) return FlowPoint{flow.transition(*i).triple(), std::nullopt, true, *i};
  const int k = flow.interval_at(t);
  const IntervalSpec& iv = flow.interval(k);
  try {
    return FlowPoint{MarkovTriple(iv.states, iv.rates_at(t), iv.pi_at(t)), iv.rate_dot_at(t), false, k};
  } catch (const validation_error& e) {
    throw validation_error("triple at t=" + fmt(t) + ": " + e.what());
  }
}

std::vector<std::vector<int>> fibers(const std::vector<int>& map, int target_size) {
  std::vector<std::vector<int>> out(static_cast<size_t>(target_size));
  for (size_t x = 0; x < map.size(); ++x) out[static_cast<size_t>(map[x])].push_back(static_cast<int>(x));
  return out;
}

Vector local_equilibrium(const Vector& pi, const std::vector<int>& map, int target_size) {
  Vector mass = Vector::Zero(target_size);
  for (size_t x = 0; x < map.size(); ++x) mass(map[x]) += pi(static_cast<Eigen::Index>(x));
  Vector out(pi.size());
  for (size_t x = 0; x < map.size(); ++x)
    out(static_cast<Eigen::Index>(x)) = pi(static_cast<Eigen::Index>(x)) / mass(map[x]);
  return out;
}

void aggregate_limits(const IntervalSpec& interval, End end, const std::vector<int>& map,
                      int boundary_size, Matrix& rates, Vector& pi) {
  const Matrix q = interval.limit_rates(end);
  const Vector p = interval.limit_pi(end);
  pi = Vector::Zero(boundary_size);
  for (int x = 0; x < interval.size(); ++x) pi(map[x]) += p(x);
  rates = Matrix::Zero(boundary_size, boundary_size);
  for (int x = 0; x < interval.size(); ++x) {
    for (int y = 0; y < interval.size(); ++y) {
      if (x == y || map[x] == map[y] || q(x, y) == 0.0) continue;
      if (std::isinf(q(x, y)))
        throw validation_error("exploding rate (" + interval.states[x] + "," + interval.states[y] +
                               ") joins different boundary states");
      rates(map[x], map[y]) += q(x, y) * p(x);
    }
  }
  for (int z = 0; z < boundary_size; ++z) rates.row(z) /= pi(z);
}

SingularTransition make_transition(double time, std::vector<std::string> states,
                                   std::vector<int> collapse_map, std::vector<int> spawn_map,
                                   const IntervalSpec* previous, const IntervalSpec* next) {
  SingularTransition tr;
  tr.time = time;
  tr.states = std::move(states);
  tr.collapse_map = std::move(collapse_map);
  tr.spawn_map = std::move(spawn_map);
  if (previous)
    aggregate_limits(*previous, End::finish, tr.collapse_map, tr.size(), tr.rates, tr.pi);
  else if (next)
    aggregate_limits(*next, End::start, tr.spawn_map, tr.size(), tr.rates, tr.pi);
  else
    throw contract_error("make_transition: needs an adjacent interval");
  return tr;
}

// ---------------------------------------------------------------------------
// Validation

bool ValidationReport::ok() const { return error_count() == 0; }

int ValidationReport::error_count() const {
  return static_cast<int>(std::count_if(issues.begin(), issues.end(), [](const ValidationIssue& i) {
    return i.severity == Severity::error;
  }));
}

int ValidationReport::warning_count() const {
  return static_cast<int>(issues.size()) - error_count();
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  os << error_count() << " error(s), " << warning_count() << " warning(s)";
  for (const ValidationIssue& i : issues)
    os << "\n  [" << (i.severity == Severity::error ? "error" : "warning") << "] " << i.condition
       << " @ " << i.location << ": " << i.message;
  return os.str();
}

namespace {

struct IssueSink {
  ValidationReport& report;
  void add(Severity s, std::string condition, std::string location, std::string message) {
    report.issues.push_back({s, std::move(condition), std::move(location), std::move(message)});
  }
};

std::string edge_name(const IntervalSpec& iv, const EdgeSchedule& e) {
  return "(" + iv.states[e.from] + "," + iv.states[e.to] + ")";
}

void check_interval(const IntervalSpec& iv, int index, const ValidationOptions& opt, IssueSink& sink) {
  const std::string loc = "interval " + std::to_string(index) + " (" + fmt(iv.t_start) + "," +
                          fmt(iv.t_end) + ")";
  // Invariant-measure limits at both ends.
  for (End end : {End::start, End::finish}) {
    const Vector p = iv.limit_pi(end);
    for (int x = 0; x < iv.size(); ++x) {
      if (!(p(x) > 0.0) || p(x) > 1.0 + opt.tolerance)
        sink.add(Severity::error, "pi-limits", loc + " state " + iv.states[x],
                 "limit of pi at the " + std::string(end == End::start ? "start" : "end") +
                     " is " + fmt(p(x)) + ", outside (0,1]");
    }
  }
  // Rate schedules: positivity, poles only at the endpoints, divergence.
  for (const EdgeSchedule& e : iv.edges) {
    const RateSchedule& s = e.schedule;
    const std::string where = loc + " edge " + edge_name(iv, e);
    if (s.identically_zero()) continue;
    const RateParams& p = s.params();
    bool pole_inside = false;
    if (s.kind() == RateKind::collapse_pole && p.t_pole < iv.t_end && !chained(p.t_pole, iv.t_end))
      pole_inside = true;
    if (s.kind() == RateKind::spawn_pole && p.t_pole > iv.t_start && !chained(p.t_pole, iv.t_start))
      pole_inside = true;
    if (s.kind() == RateKind::soliton_scaled && p.kappa * p.scale != 0.0) {
      const double tp = p.t_ref + 1.0 / (2.0 * p.kappa * p.scale);
      if (tp > iv.t_start && tp < iv.t_end && !chained(tp, iv.t_end) && !chained(tp, iv.t_start))
        pole_inside = true;
    }
    if (pole_inside) {
      sink.add(Severity::error, "rate-regularity", where, "rate has a pole inside the interval");
      continue;
    }
    bool positive = true;
    for (int k = 0; k < opt.samples_per_interval; ++k) {
      const double t = iv.t_start + (k + 0.5) / opt.samples_per_interval * (iv.t_end - iv.t_start);
      if (!(s.value(t) > 0.0)) positive = false;
    }
    for (End end : {End::start, End::finish}) {
      const EndBehaviour b = end == End::finish ? s.limit_left(iv.t_end) : s.limit_right(iv.t_start);
      if (!b.infinite && !(b.value >= 0.0)) positive = false;
      if (b.infinite && b.order < 1.0)
        sink.add(Severity::error, "rate-divergence", where,
                 "rate explodes at t=" + fmt(end == End::finish ? iv.t_end : iv.t_start) +
                     " with pole order " + fmt(b.order) +
                     " < 1, so its time integral is finite and the collapsing vertices need not "
                     "equilibrate");
    }
    if (!positive)
      sink.add(Severity::error, "rate-positivity", where,
               "rate must be strictly positive on the open interval or identically zero");
  }
  // Detailed balance and irreducibility at sampled times.
  for (int k = 0; k < opt.samples_per_interval; ++k) {
    const double t = iv.t_start + (k + 0.5) / opt.samples_per_interval * (iv.t_end - iv.t_start);
    try {
      MarkovTriple(iv.states, iv.rates_at(t), iv.pi_at(t), opt.tolerance);
    } catch (const std::exception& ex) {
      sink.add(Severity::error, "sampled-triple", loc + " t=" + fmt(t), ex.what());
      break;
    }
  }
}

// Classes of the relation generated by exploding rates at one end.
std::vector<int> explosion_classes(const IntervalSpec& iv, End end) {
  std::vector<int> parent(static_cast<size_t>(iv.size()));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[static_cast<size_t>(x)] != x) x = parent[static_cast<size_t>(x)] = parent[static_cast<size_t>(parent[static_cast<size_t>(x)])];
    return x;
  };
  const Matrix q = iv.limit_rates(end);
  for (int x = 0; x < iv.size(); ++x)
    for (int y = 0; y < iv.size(); ++y)
      if (x != y && std::isinf(q(x, y))) parent[static_cast<size_t>(find(x))] = find(y);
  std::vector<int> out(static_cast<size_t>(iv.size()));
  for (int x = 0; x < iv.size(); ++x) out[static_cast<size_t>(x)] = find(x);
  return out;
}

void check_side(const SingularFlow& flow, int ti, bool collapse, const ValidationOptions& opt,
                IssueSink& sink) {
  const SingularTransition& tr = flow.transition(ti);
  const IntervalSpec& iv = flow.interval(collapse ? ti - 1 : ti);
  const End end = collapse ? End::finish : End::start;
  const std::vector<int>& map = collapse ? tr.collapse_map : tr.spawn_map;
  const std::string kind = collapse ? "collapse" : "spawn";
  const std::string loc = "transition " + std::to_string(ti) + " (t=" + fmt(tr.time) + ") " + kind;

  std::vector<char> hit(static_cast<size_t>(tr.size()), 0);
  for (int v : map) hit[static_cast<size_t>(v)] = 1;
  for (int z = 0; z < tr.size(); ++z)
    if (!hit[static_cast<size_t>(z)])
      sink.add(Severity::error, kind + "-map", loc, "boundary state " + tr.states[z] + " has no preimage");

  const std::vector<int> cls = explosion_classes(iv, end);
  for (int x = 0; x < iv.size(); ++x)
    for (int y = x + 1; y < iv.size(); ++y) {
      const bool same_cls = cls[static_cast<size_t>(x)] == cls[static_cast<size_t>(y)];
      const bool same_map = map[static_cast<size_t>(x)] == map[static_cast<size_t>(y)];
      if (same_cls != same_map)
        sink.add(Severity::error, kind + "-classes", loc,
                 "states " + iv.states[x] + " and " + iv.states[y] +
                     (same_map ? " are identified but not joined by exploding rates"
                               : " are joined by exploding rates but not identified"));
    }

  const Matrix q = iv.limit_rates(end);
  const Vector p = iv.limit_pi(end);
  Vector agg_pi = Vector::Zero(tr.size());
  for (int x = 0; x < iv.size(); ++x) agg_pi(map[static_cast<size_t>(x)]) += p(x);
  for (int z = 0; z < tr.size(); ++z)
    if (std::abs(agg_pi(z) - tr.pi(z)) > opt.tolerance * std::max(1.0, tr.pi(z)))
      sink.add(Severity::error, "pi-aggregation", loc + " state " + tr.states[z],
               "boundary pi " + fmt(tr.pi(z)) + " differs from the summed limits " + fmt(agg_pi(z)));
  Matrix flux = Matrix::Zero(tr.size(), tr.size());
  bool crossing = false;
  for (int x = 0; x < iv.size(); ++x)
    for (int y = 0; y < iv.size(); ++y) {
      const int zx = map[static_cast<size_t>(x)];
      const int zy = map[static_cast<size_t>(y)];
      if (x == y || zx == zy || q(x, y) == 0.0) continue;
      if (std::isinf(q(x, y))) {
        crossing = true;
        continue;
      }
      flux(zx, zy) += q(x, y) * p(x);
    }
  if (!crossing) {
    for (int z = 0; z < tr.size(); ++z)
      for (int w = 0; w < tr.size(); ++w) {
        if (z == w) continue;
        const double want = flux(z, w) / tr.pi(z);
        const double have = tr.rates(z, w);
        if (std::abs(want - have) > opt.tolerance * std::max({1.0, std::abs(want), std::abs(have)}))
          sink.add(Severity::error, "rate-aggregation", loc + " pair (" + tr.states[z] + "," + tr.states[w] + ")",
                   "boundary rate " + fmt(have) + " differs from the aggregated limit " + fmt(want));
      }
  }

  // Growth of the exploding rates inside each class.
  for (int z = 0; z < tr.size(); ++z) {
    double gmin = kInf, gmax = 0.0, amin = kInf;
    bool any = false;
    for (const EdgeSchedule& e : iv.edges) {
      if (map[static_cast<size_t>(e.from)] != z || map[static_cast<size_t>(e.to)] != z) continue;
      const EndBehaviour b = collapse ? e.schedule.limit_left(iv.t_end) : e.schedule.limit_right(iv.t_start);
      if (!b.infinite) continue;
      any = true;
      if (b.order < gmin) {
        gmin = b.order;
        amin = b.coefficient;
      } else if (b.order == gmin) {
        amin = std::min(amin, b.coefficient);
      }
      gmax = std::max(gmax, b.order);
    }
    if (!any) continue;
    const std::string where = loc + " class " + tr.states[z];
    if (collapse) {
      const bool good = gmin > 1.0 || (gmin == 1.0 && 2.0 * amin > gmax);
      if (!good)
        sink.add(Severity::warning, "collapse-growth", where,
                 "Q_max·exp(-2∫Q_min) does not vanish: minimal pole order " + fmt(gmin) +
                     " with coefficient " + fmt(amin) + ", maximal order " + fmt(gmax));
    } else if (!(gmax < 2.0)) {
      sink.add(Severity::warning, "spawn-growth", where,
               "(t - t_i)²·Q_max does not vanish: maximal pole order " + fmt(gmax));
    }
  }
}

}  // namespace

ValidationReport validate_flow(const SingularFlow& flow, const ValidationOptions& options) {
  ValidationReport report;
  IssueSink sink{report};
  for (int i = 0; i < flow.num_intervals(); ++i) check_interval(flow.interval(i), i, options, sink);
  for (int i = 0; i <= flow.num_intervals(); ++i) {
    const SingularTransition& tr = flow.transition(i);
    try {
      MarkovTriple(tr.states, tr.rates, tr.pi, options.tolerance);
    } catch (const std::exception& ex) {
      sink.add(Severity::error, "boundary-triple", "transition " + std::to_string(i) + " (t=" + fmt(tr.time) + ")",
               ex.what());
    }
    if (i > 0) check_side(flow, i, true, options, sink);
    if (i < flow.num_intervals()) check_side(flow, i, false, options, sink);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Constructors

namespace {

IntervalSpec interval_from(const MarkovTriple& triple, double t0, double t1,
                           const std::optional<RateSchedule>& factor) {
  IntervalSpec iv;
  iv.t_start = t0;
  iv.t_end = t1;
  iv.states = triple.states();
  for (int x = 0; x < triple.size(); ++x) {
    iv.pi.push_back(PiSchedule::constant(triple.pi()(x)));
    for (int y = 0; y < triple.size(); ++y) {
      if (x == y || triple.rate(x, y) <= 0.0) continue;
      iv.edges.push_back({x, y, factor ? factor->scaled(triple.rate(x, y))
                                       : RateSchedule::constant(triple.rate(x, y))});
    }
  }
  return iv;
}

std::vector<int> identity_map(int n) {
  std::vector<int> m(static_cast<size_t>(n));
  std::iota(m.begin(), m.end(), 0);
  return m;
}

// Transition at one end of a single interval: identity unless rates explode,
// in which case the connected interval collapses (or spawns from) one point.
SingularTransition end_transition(const IntervalSpec& iv, End end) {
  const bool first = end == End::start;
  const double t = first ? iv.t_start : iv.t_end;
  std::vector<std::string> states = iv.states;
  std::vector<int> map = identity_map(iv.size());
  if (iv.has_poles(end)) {
    const std::vector<int> cls = explosion_classes(iv, end);
    std::vector<int> roots;
    for (int r : cls)
      if (std::find(roots.begin(), roots.end(), r) == roots.end()) roots.push_back(r);
    states.clear();
    for (size_t k = 0; k < roots.size(); ++k)
      states.push_back(roots.size() == 1 ? std::string("*") : "*" + std::to_string(k));
    for (int x = 0; x < iv.size(); ++x)
      map[static_cast<size_t>(x)] = static_cast<int>(
          std::find(roots.begin(), roots.end(), cls[static_cast<size_t>(x)]) - roots.begin());
  }
  if (first) return make_transition(t, states, {}, map, nullptr, &iv);
  return make_transition(t, states, map, {}, &iv, nullptr);
}

}  // namespace

SingularFlow static_flow(const MarkovTriple& triple, double t0, double t1, const std::string& name) {
  if (!(t0 < t1)) throw contract_error("static_flow: need t0 < t1");
  IntervalSpec iv = interval_from(triple, t0, t1, std::nullopt);
  SingularTransition a = end_transition(iv, End::start);
  SingularTransition b = end_transition(iv, End::finish);
  return SingularFlow({iv}, {a, b}, name);
}

SingularFlow scaled_flow(const MarkovTriple& triple, const RateSchedule& factor, double t0,
                         double t1, const std::string& name) {
  if (!(t0 < t1)) throw contract_error("scaled_flow: need t0 < t1");
  IntervalSpec iv = interval_from(triple, t0, t1, factor);
  SingularTransition a = end_transition(iv, End::start);
  SingularTransition b = end_transition(iv, End::finish);
  return SingularFlow({iv}, {a, b}, name);
}

namespace {

// View of one factor on a merged sub-interval or at a merged breakpoint.
struct FactorSlice {
  std::vector<std::string> states;
  std::vector<int> collapse_map;  // from previous merged interval's states
  std::vector<int> spawn_map;     // from next merged interval's states
  Matrix rates;
  Vector pi;
};

FactorSlice slice_at(const SingularFlow& f, double tau, bool first, bool last) {
  FactorSlice s;
  if (auto k = f.transition_at(tau)) {
    const SingularTransition& tr = f.transition(*k);
    s.states = tr.states;
    s.collapse_map = tr.collapse_map;
    s.spawn_map = tr.spawn_map;
    s.rates = tr.rates;
    s.pi = tr.pi;
  } else {
    const IntervalSpec& iv = f.interval(f.interval_at(tau));
    s.states = iv.states;
    s.collapse_map = identity_map(iv.size());
    s.spawn_map = identity_map(iv.size());
    s.rates = iv.rates_at(tau);
    s.pi = iv.pi_at(tau);
  }
  if (first) s.collapse_map.clear();
  if (last) s.spawn_map.clear();
  return s;
}

}  // namespace

SingularFlow product_flow(const SingularFlow& a, const SingularFlow& b) {
  if (!chained(a.t_start(), b.t_start()) || !chained(a.t_end(), b.t_end()))
    throw contract_error("product_flow: factors must span the same time range");
  std::vector<double> cuts;
  for (const auto& tr : a.transitions()) cuts.push_back(tr.time);
  for (const auto& tr : b.transitions())
    if (std::none_of(cuts.begin(), cuts.end(), [&](double c) { return chained(c, tr.time); }))
      cuts.push_back(tr.time);
  std::sort(cuts.begin(), cuts.end());

  std::vector<IntervalSpec> intervals;
  for (size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double mid = 0.5 * (cuts[k] + cuts[k + 1]);
    const IntervalSpec& ia = a.interval(a.interval_at(mid));
    const IntervalSpec& ib = b.interval(b.interval_at(mid));
    IntervalSpec iv;
    iv.t_start = cuts[k];
    iv.t_end = cuts[k + 1];
    const int nb = ib.size();
    for (int x = 0; x < ia.size(); ++x)
      for (int y = 0; y < nb; ++y) {
        iv.states.push_back(ia.states[x] + "|" + ib.states[y]);
        iv.pi.push_back(ia.pi[static_cast<size_t>(x)] * ib.pi[static_cast<size_t>(y)]);
      }
    for (const EdgeSchedule& e : ia.edges)
      for (int y = 0; y < nb; ++y) iv.edges.push_back({e.from * nb + y, e.to * nb + y, e.schedule});
    for (const EdgeSchedule& e : ib.edges)
      for (int x = 0; x < ia.size(); ++x) iv.edges.push_back({x * nb + e.from, x * nb + e.to, e.schedule});
    intervals.push_back(std::move(iv));
  }

  std::vector<SingularTransition> transitions;
  for (size_t k = 0; k < cuts.size(); ++k) {
    const bool first = k == 0;
    const bool last = k + 1 == cuts.size();
    const FactorSlice sa = slice_at(a, cuts[k], first, last);
    const FactorSlice sb = slice_at(b, cuts[k], first, last);
    const int na = static_cast<int>(sa.states.size());
    const int nb = static_cast<int>(sb.states.size());
    SingularTransition tr;
    tr.time = cuts[k];
    for (int x = 0; x < na; ++x)
      for (int y = 0; y < nb; ++y) tr.states.push_back(sa.states[x] + "|" + sb.states[y]);
    tr.pi = Vector(na * nb);
    tr.rates = Matrix::Zero(na * nb, na * nb);
    for (int x = 0; x < na; ++x)
      for (int y = 0; y < nb; ++y) {
        const int i = x * nb + y;
        tr.pi(i) = sa.pi(x) * sb.pi(y);
        for (int x2 = 0; x2 < na; ++x2)
          if (x2 != x) tr.rates(i, x2 * nb + y) = sa.rates(x, x2);
        for (int y2 = 0; y2 < nb; ++y2)
          if (y2 != y) tr.rates(i, x * nb + y2) = sb.rates(y, y2);
      }
    auto combine = [&](const std::vector<int>& ma, const std::vector<int>& mb) {
      std::vector<int> m;
      for (int ca : ma)
        for (int cb : mb) m.push_back(ca * nb + cb);
      return m;
    };
    if (!first) tr.collapse_map = combine(sa.collapse_map, sb.collapse_map);
    if (!last) tr.spawn_map = combine(sa.spawn_map, sb.spawn_map);
    transitions.push_back(std::move(tr));
  }
  std::string name = a.name() + "*" + b.name();
  return SingularFlow(std::move(intervals), std::move(transitions), name);
}

}  // namespace srf
