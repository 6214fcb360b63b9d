#pragma once

// Singular time-dependent Markov triples: an interval partition with
// per-interval rate and invariant-measure schedules, joined at singular
// times by collapse and spawn maps onto a boundary triple.

#include "srf/core_chain.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace srf {

/// Behaviour of a schedule as t approaches an interval endpoint.
struct EndBehaviour {
  bool infinite = false;
  double value = 0.0;        // finite limit (when !infinite)
  double order = 0.0;        // pole order γ: Q ≈ coefficient / |t-τ|^γ
  double coefficient = 0.0;  // leading coefficient of the pole
};

enum class End { start, finish };

enum class RateKind {
  constant,        // c
  affine,          // a + b·t
  soliton_scaled,  // c / (1 - 2κR(t - t_ref))
  collapse_pole,   // c / (t_pole - t)^γ
  spawn_pole,      // c / (t - t_pole)^γ
  tabulated,       // log-linear interpolation of positive samples
};

struct RateParams {
  double c = 0.0;
  double a = 0.0;
  double b = 0.0;
  double kappa = 0.0;
  double t_ref = 0.0;
  double scale = 1.0;  // the extra factor R of the soliton form
  double t_pole = 0.0;
  double order = 1.0;
  std::vector<double> times;
  std::vector<double> values;
};

/// Time dependence of a single directed rate Q_t(x,y).
class RateSchedule {
 public:
  static RateSchedule constant(double c);
  static RateSchedule affine(double a, double b);
  static RateSchedule soliton_scaled(double c, double kappa, double t_ref = 0.0,
                                     double scale = 1.0);
  static RateSchedule collapse_pole(double c, double t_pole, double order = 1.0);
  static RateSchedule spawn_pole(double c, double t_pole, double order = 1.0);
  static RateSchedule tabulated(std::vector<double> times, std::vector<double> values);

  RateKind kind() const { return kind_; }
  const RateParams& params() const { return p_; }

  double value(double t) const;
  /// Tabulated schedules have no analytic derivative.
  bool has_derivative() const { return kind_ != RateKind::tabulated; }
  double derivative(double t) const;
  /// Q at t = tau - d (End::finish, approaching from the left) or t = tau + d
  /// (End::start); accurate for distances d far below the resolution of tau.
  double value_near(double tau, End side, double d) const;

  /// Limits as t ↑ tau (left) and t ↓ tau (right).
  EndBehaviour limit_left(double tau) const;
  EndBehaviour limit_right(double tau) const;

  /// ∫_a^b Q_t dt for a ≤ b on a range where Q is finite.
  double integral(double a, double b) const;

  /// sup over [a,b] of |d/dt log Q_t|, for a range where Q > 0.
  double log_lipschitz(double a, double b) const;

  bool identically_zero() const;

  /// The same schedule multiplied by factor > 0.
  RateSchedule scaled(double factor) const;

 private:
  RateSchedule(RateKind kind, RateParams p) : kind_(kind), p_(std::move(p)) {}
  double soliton_denominator(double t) const;
  RateKind kind_;
  RateParams p_;
};

const char* to_string(RateKind kind);
std::optional<RateKind> rate_kind_from_string(const std::string& name);

enum class PiKind { constant, affine, polynomial, tabulated };

/// Time dependence of one invariant-measure weight π_t(x).
class PiSchedule {
 public:
  static PiSchedule constant(double v);
  static PiSchedule affine(double a, double b);
  /// Σ_k coeffs[k]·t^k.
  static PiSchedule polynomial(std::vector<double> coeffs);
  /// Piecewise-linear interpolation, constant beyond the samples.
  static PiSchedule tabulated(std::vector<double> times, std::vector<double> values);

  PiKind kind() const { return kind_; }
  const std::vector<double>& coefficients() const { return coeffs_; }
  const std::vector<double>& times() const { return times_; }
  const std::vector<double>& values() const { return values_; }

  double value(double t) const;
  double derivative(double t) const;

  /// Product of two schedules (tabulated factors are not supported).
  friend PiSchedule operator*(const PiSchedule& a, const PiSchedule& b);

 private:
  PiSchedule(PiKind kind) : kind_(kind) {}
  PiKind kind_;
  std::vector<double> coeffs_;
  std::vector<double> times_;
  std::vector<double> values_;
};

const char* to_string(PiKind kind);

struct EdgeSchedule {
  int from = 0;
  int to = 0;
  RateSchedule schedule;
};

/// One open interval (t_start, t_end) with fixed vertex set.
struct IntervalSpec {
  double t_start = 0.0;
  double t_end = 0.0;
  std::vector<std::string> states;
  std::vector<EdgeSchedule> edges;  // directed; absent pairs have rate 0
  std::vector<PiSchedule> pi;

  int size() const { return static_cast<int>(states.size()); }
  int index_of(const std::string& name) const;

  /// Off-diagonal rates at t (no validation).
  Matrix rates_at(double t) const;
  /// Off-diagonal rates at distance d from an endpoint, accurate near poles.
  Matrix rates_near(End end, double d) const;
  /// Generator (diagonal = minus row sums) at t.
  Matrix generator_at(double t) const;
  /// Analytic Q̇_t, or nothing if any schedule is tabulated.
  std::optional<Matrix> rate_dot_at(double t) const;
  Vector pi_at(double t) const;

  /// One-sided limits at an endpoint; entries may be +infinity.
  Matrix limit_rates(End end) const;
  Vector limit_pi(End end) const;
  /// True if some rate explodes at that endpoint.
  bool has_poles(End end) const;
};

/// The singular time t_i with boundary triple on X̄_i. collapse_map sends the
/// states of the preceding interval to boundary states (empty at the initial
/// time); spawn_map does the same for the following interval (empty at the
/// final time).
struct SingularTransition {
  double time = 0.0;
  std::vector<std::string> states;
  std::vector<int> collapse_map;
  std::vector<int> spawn_map;
  Matrix rates;  // off-diagonal boundary rates
  Vector pi;

  int size() const { return static_cast<int>(states.size()); }
  /// Boundary triple; throws validation_error if it is not a valid triple.
  MarkovTriple triple() const;
};

class SingularFlow {
 public:
  /// Checks the structural contract (chaining of times, map sizes, indices)
  /// and throws contract_error; conditions on the data itself are checked by
  /// validate_flow.
  SingularFlow(std::vector<IntervalSpec> intervals,
               std::vector<SingularTransition> transitions, std::string name = "");

  const std::string& name() const { return name_; }
  int num_intervals() const { return static_cast<int>(intervals_.size()); }
  const IntervalSpec& interval(int i) const { return intervals_.at(static_cast<size_t>(i)); }
  const SingularTransition& transition(int i) const {
    return transitions_.at(static_cast<size_t>(i));
  }
  const std::vector<IntervalSpec>& intervals() const { return intervals_; }
  const std::vector<SingularTransition>& transitions() const { return transitions_; }
  double t_start() const { return transitions_.front().time; }
  double t_end() const { return transitions_.back().time; }

  /// Index i of the transition at time t (within rounding), if any.
  std::optional<int> transition_at(double t) const;
  /// Index of the interval containing t in its open range; t must not be a
  /// singular time.
  int interval_at(double t) const;
  /// Names of the vertex set at time t.
  const std::vector<std::string>& states_at(double t) const;

 private:
  std::vector<IntervalSpec> intervals_;
  std::vector<SingularTransition> transitions_;
  std::string name_;
};

struct FlowPoint {
  MarkovTriple triple;
  std::optional<Matrix> rate_dot;  // absent at singular times and for tabulated rates
  bool singular = false;
  int index = 0;  // transition index if singular, else interval index
};

/// The Markov triple (and Q̇) at time t ∈ [t_0, T].
FlowPoint eval_at(const SingularFlow& flow, double t);

/// Boundary rates and π aggregated from one-sided limits of an interval
/// through a quotient map. Throws validation_error if a rate between different
/// classes explodes.
void aggregate_limits(const IntervalSpec& interval, End end, const std::vector<int>& map,
                      int boundary_size, Matrix& rates, Vector& pi);

/// Transition whose boundary triple is aggregated from the preceding interval
/// (or from the following one at the initial time).
SingularTransition make_transition(double time, std::vector<std::string> states,
                                   std::vector<int> collapse_map, std::vector<int> spawn_map,
                                   const IntervalSpec* previous, const IntervalSpec* next);

/// Fibers of a quotient map as lists of source indices, one per target.
std::vector<std::vector<int>> fibers(const std::vector<int>& map, int target_size);

/// Local equilibrium weights π̄(x) = π(x)/Σ_{class} π on each fiber.
Vector local_equilibrium(const Vector& pi, const std::vector<int>& map, int target_size);

enum class Severity { warning, error };

struct ValidationIssue {
  Severity severity = Severity::error;
  std::string condition;  // short identifier, e.g. "rate-divergence"
  std::string location;   // e.g. "interval 0 edge (a,b)"
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  bool ok() const;  // no errors (warnings allowed)
  int error_count() const;
  int warning_count() const;
  std::string summary() const;
};

struct ValidationOptions {
  int samples_per_interval = 100;
  double tolerance = 1e-9;
};

ValidationReport validate_flow(const SingularFlow& flow, const ValidationOptions& options = {});

/// Time-constant flow on [t0, t1] with identity outer transitions.
SingularFlow static_flow(const MarkovTriple& triple, double t0, double t1,
                         const std::string& name = "static");

/// Flow on [t0, t1] with Q_t = L_t·Q for a scalar schedule L (π constant),
/// no collapse at the ends; the final transition collapses everything to
/// one point when L explodes there.
SingularFlow scaled_flow(const MarkovTriple& triple, const RateSchedule& factor, double t0,
                         double t1, const std::string& name);

/// Product flow taking independent jumps in each factor; the time partitions
/// are merged. Both factors must span the same time range.
SingularFlow product_flow(const SingularFlow& a, const SingularFlow& b);

using ScenarioParams = std::map<std::string, double>;

/// Names accepted by builtin_scenario.
std::vector<std::string> builtin_names();

/// Example flows: "static", "two_point_soliton", "supercritical_two_point",
/// "expanding_soliton", "collapse_product", "explosion_product", "toy".
/// Throws contract_error for an unknown name or bad parameters, and
/// validation_error if the resulting flow fails validation.
SingularFlow builtin_scenario(const std::string& name, const ScenarioParams& params = {});

}  // namespace srf
