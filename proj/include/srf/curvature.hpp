#pragma once

// Numerical verification of the super-Ricci-flow property. Each check samples
// one of the four equivalent criteria (Bochner inequality, gradient estimate,
// transport estimate, dynamic convexity of the entropy) or the reverse
// Poincaré inequality, and reports the worst signed slack together with a
// witness. The checks refute by sampling: "pass" means "not disproved within
// the stated budget".

#include "srf/core_chain.hpp"
#include "srf/schedule.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace srf {

enum class Criterion {
  bochner,
  gradient_estimate,
  transport_estimate,
  dynamic_convexity,
  reverse_poincare,
  static_ricci,
  aggregate,
};

const char* to_string(Criterion c);

enum class Verdict { pass, violation, inconclusive };

const char* to_string(Verdict v);

/// The configuration with the worst slack. Times are (t) for pointwise
/// criteria and (s, t) for two-time criteria; mu lives on X_t, nu (transport
/// and convexity pairs) on X_t, psi on X_s (or X_t for Bochner).
struct Witness {
  std::vector<double> times;
  Measure mu;
  Measure nu;
  VertexFunction psi;
};

struct VerificationReport {
  Criterion criterion = Criterion::aggregate;
  Verdict verdict = Verdict::pass;
  /// Worst signed slack (negative means the inequality failed there). Units:
  /// Bochner – generalized eigenvalue (1/time); gradient estimate – slack
  /// relative to Γ_s(P̂μ,ψ); reverse Poincaré – slack relative to the
  /// variance term; transport – distance; convexity – entropy-derivative
  /// units. Aggregate – smallest part margin in units of its tolerance.
  double margin = 0.0;
  double tolerance = 0.0;
  std::optional<Witness> witness;
  int samples = 0;
  int inconclusive_samples = 0;
  std::vector<std::string> notes;
  /// Aggregate only: the individual reports and whether their verdicts agree.
  std::vector<VerificationReport> parts;
  bool consistent = true;
};

// ---------------------------------------------------------------------------
// Pointwise Bochner quantities.

/// Quadratic forms at fixed (t, μ): Γ₂ − ½∂ₜΓ = ψᵀAψ and Γ = ψᵀBψ.
struct BochnerForm {
  Matrix a;
  Matrix b;
};

BochnerForm bochner_form(const MarkovTriple& triple, const std::optional<Matrix>& rate_dot,
                         const Measure& mu);

struct BochnerGap {
  double value = 0.0;  // min over non-constant ψ of ψᵀAψ / ψᵀBψ
  VertexFunction psi;  // minimizer with ψᵀBψ = 1 and Σψ = 0
  /// True if B had null directions beyond constants (the minimum is then
  /// taken over the range of B).
  bool restricted = false;
};

/// Smallest generalized eigenvalue of (A, B) on the range of B. Requires an
/// interior μ; throws contract_error on size problems and std::domain_error
/// for a non-interior μ.
BochnerGap bochner_gap(const MarkovTriple& triple, const std::optional<Matrix>& rate_dot,
                       const Measure& mu);

/// Same at time t of a flow; t must not be a singular time and the rates at t
/// need analytic derivatives.
BochnerGap bochner_gap(const SingularFlow& flow, double t, const Measure& mu);

struct GapMinimum {
  double value = 0.0;
  Measure mu;
  VertexFunction psi;
  int starts = 0;
};

/// Multi-start projected-gradient minimization of the gap over interior μ
/// (starts: π, ε-mixed corners, random Dirichlet points).
GapMinimum minimize_gap(const MarkovTriple& triple, const std::optional<Matrix>& rate_dot,
                        int starts, std::uint64_t seed);

/// Estimate (an upper bound) of the entropic Ricci lower bound of a static
/// triple: the infimum over interior μ of the Bochner gap.
double static_ricci_bound(const MarkovTriple& triple, int starts = 32, std::uint64_t seed = 1);

// ---------------------------------------------------------------------------
// Sampling checks.

struct VerifyOptions {
  std::uint64_t seed = 1;
  /// Worker threads; 0 takes SRF_THREADS or the hardware concurrency.
  int threads = 0;

  int bochner_times = 50;
  int bochner_starts = 32;
  /// Violation iff the gap is below −tolerance·(1 + max rate at t).
  double bochner_tolerance = 1e-8;

  /// Measure starts of the worst-case search at each (s, t) pair.
  int pair_starts = 8;

  int gradient_samples = 100;
  double gradient_tolerance = 1e-8;

  int transport_samples = 20;
  int transport_K = 64;
  double transport_tolerance = 1e-3;

  int convexity_times = 4;
  int convexity_pairs = 2;
  int convexity_K = 64;
  /// Backward time steps for ∂ₜ⁻𝒲², combined by linear extrapolation.
  double convexity_dt = 1e-3;
  /// Band factor applied to the estimator spread.
  double convexity_band = 10.0;
  /// Additive floor of the tolerance band (solver tolerance).
  double convexity_floor = 1e-6;

  int poincare_samples = 100;
  double poincare_tolerance = 1e-8;

  /// Singular-time straddling offsets δ: pairs (t_i − δ, t_i + δ).
  std::vector<double> straddle = {1e-2, 1e-3};
  /// Relative accuracy target handed to the heat propagators.
  double heat_rtol = 1e-12;
};

VerificationReport check_bochner(const SingularFlow& flow, const VerifyOptions& options = {});
VerificationReport check_gradient_estimate(const SingularFlow& flow,
                                           const VerifyOptions& options = {});
VerificationReport check_transport_estimate(const SingularFlow& flow,
                                            const VerifyOptions& options = {});
VerificationReport check_dynamic_convexity(const SingularFlow& flow,
                                           const VerifyOptions& options = {});
VerificationReport check_reverse_poincare(const SingularFlow& flow,
                                          const VerifyOptions& options = {});

/// Criteria (I)–(IV) and the reverse Poincaré inequality. The aggregate
/// passes iff all five pass; `consistent` is false if (I)–(IV) disagree.
VerificationReport verify_srf(const SingularFlow& flow, const VerifyOptions& options = {});

/// Recomputes the slack of a report's witness (same units as the margin).
/// Throws contract_error if the report has no witness.
double reevaluate_witness(const SingularFlow& flow, const VerificationReport& report,
                          const VerifyOptions& options = {});

/// Worker count used by the checks: options value, else SRF_THREADS, else
/// the hardware concurrency (at least 1).
int worker_count(int requested);

}  // namespace srf
