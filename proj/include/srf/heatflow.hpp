#pragma once

// Heat propagator P_{t,s} on functions and dual propagator P̂_{t,s} on
// measures for a singular flow. Inside an interval the Kolmogorov equations
// ∂ₜψ = Δₜψ and ∂ₛσ = −Δ̂ₛσ are integrated with an adaptive Dormand–Prince
// pair; near exploding rates the time variable is switched to the logarithm
// of the distance to the singular time, and the last ε before the singular
// time is replaced by the collapse/spawn projections.

#include "srf/schedule.hpp"

#include <optional>
#include <string>
#include <vector>

namespace srf {

/// forward: functions, s → t. backward: measures, t → s.
enum class Direction { forward, backward };

/// Which side of a singular time a projection acts on: the collapse side
/// (the interval ending there) or the spawn side (the interval starting there).
enum class Side { collapse, spawn };

const char* to_string(Direction d);
const char* to_string(Side s);

struct HeatOptions {
  double rtol = 1e-12;
  /// Absolute tolerance, relative to the max-norm of the initial state.
  double atol = 1e-14;
  /// Target for the projection error at each singular time; sets ε.
  double projection_tolerance = 1e-13;
  /// Uniform time grid per interval on which the state is recorded (≥ 2).
  int samples_per_interval = 256;
  /// Budget of attempted integrator steps for one propagation.
  long max_steps = 5'000'000;
};

/// Projection applied at one side of a singular time. ε is shared by the
/// forward and backward propagators, which keeps them exactly adjoint.
struct ProjectionRecord {
  int transition = 0;
  Side side = Side::collapse;
  double epsilon = 0.0;
  /// Estimated error terms: exp-decay of the within-class oscillation and the
  /// O(ε) drift caused by finite rates.
  double equilibration_error = 0.0;
  double drift_error = 0.0;
  /// Observed within-class disequilibrium of the state at distance ε:
  /// oscillation of ψ (functions) or deviation of σ from π̄-proportional mass
  /// (measures).
  double spread = 0.0;
};

/// State on the boundary vertex set at a singular time, with the one-sided
/// limits (on the neighbouring interval's vertex set) that were reached.
struct BoundaryValue {
  int transition = 0;
  double time = 0.0;
  Vector value;
  std::optional<Vector> left;
  std::optional<Vector> right;
};

/// Recorded states on one interval, in increasing time. Endpoint samples at a
/// singular time hold the one-sided limit (the state at distance ε).
struct TrajectorySegment {
  int interval = 0;
  std::vector<double> times;
  std::vector<Vector> values;
};

struct HeatSolution {
  const SingularFlow* flow = nullptr;  // non-owning
  Direction direction = Direction::forward;
  double s = 0.0;
  double t = 0.0;
  Vector initial;  // ψ on 𝒳_s (forward) or σ on 𝒳_t (backward)
  Vector result;   // P_{t,s}ψ on 𝒳_t or P̂_{t,s}σ on 𝒳_s
  std::vector<std::string> result_states;
  std::vector<TrajectorySegment> segments;  // increasing time
  std::vector<BoundaryValue> boundaries;    // increasing time
  std::vector<ProjectionRecord> projections;
  long steps = 0;           // accepted integrator steps
  long rejected_steps = 0;  // rejected integrator steps
};

/// P_{t,s}ψ for s ≤ t. At a singular time the state lives on the boundary
/// vertex set. Throws contract_error for bad arguments and numerical_failure
/// when the integrator cannot meet its tolerance within the step budget.
HeatSolution propagate(const SingularFlow& flow, double s, double t, const Vector& psi,
                       const HeatOptions& options = {});

/// P̂_{t,s}σ for s ≤ t, running backwards from t to s.
HeatSolution propagate_dual(const SingularFlow& flow, double s, double t, const Vector& sigma,
                            const HeatOptions& options = {});

/// The four projection/extension rules at a singular time:
///   forward,  collapse: π̄-average of a function over each collapse class;
///   forward,  spawn:    copy a boundary value to every spawned vertex;
///   backward, spawn:    sum a measure over each spawn class;
///   backward, collapse: split boundary mass over a collapse class by π̄.
/// fine_pi is the invariant measure on the collapsing interval's vertex set
/// (only used on the collapse side). Throws contract_error on size mismatch.
Vector singular_transition_apply(const SingularTransition& transition, const Vector& fine_pi,
                                 const Vector& state, Direction direction, Side side);

/// Same, taking π̄ from the limit of the adjacent interval of the flow.
Vector singular_transition_apply(const SingularFlow& flow, int transition, const Vector& state,
                                 Direction direction, Side side);

/// The ε used on one side of a singular time, with its error estimates.
ProjectionRecord projection_epsilon(const SingularFlow& flow, int transition, Side side,
                                    double tolerance);

}  // namespace srf
