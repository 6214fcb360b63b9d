#pragma once

// Discrete transport distance 𝒲 of a Markov triple: a primal upper value by
// convex minimization over discretized continuity-equation paths, a dual
// lower value from discrete Hamilton–Jacobi subsolutions, geodesics and the
// metric tensor G(μ,s) = ⟨s, K_μ⁻¹ s⟩.
//
// Discretization. The curve parameter a ∈ [0,1] is split into K steps with
// node measures μ⁰…μᴷ and one flux V^k per step. The step mobility is the
// average ½(Λ(μ^{k-1}) + Λ(μ^k)) of the endpoint mobilities, so the action
//   (1/K) Σ_k Σ_edges V^k(x,y)² / m^k(x,y)
// is jointly convex and its Lagrangian dual splits into one concave
// maximization over the simplex per interior node.

#include "srf/core_chain.hpp"

#include <vector>

namespace srf {

struct TransportOptions {
  /// Newton stops when the squared decrement falls below tolerance·(1+J).
  double tolerance = 1e-13;
  int max_iterations = 200;
  /// Weight of π mixed into endpoints with zero masses for geodesics and the
  /// metric tensor.
  double mixing = 1e-6;
  /// Certified per-step violation accepted for a dual witness.
  double feasibility_tolerance = 1e-8;
};

/// Discrete path: K+1 node measures and K antisymmetric step fluxes
/// satisfying μ^k − μ^{k−1} + (1/K)·∇·V^k = 0 with ∇·V(x) = Σ_y V(x,y).
struct TransportPath {
  int K = 0;
  std::vector<Measure> mu;
  std::vector<EdgeField> flux;
  double action = 0.0;
};

/// Discrete action of a path (+∞ if a flux crosses an edge of zero mobility).
/// Shapes must match the triple.
double action(const MarkovTriple& triple, const TransportPath& path);

/// Largest violation of the discrete continuity equation over all steps.
double continuity_residual(const TransportPath& path);

struct PrimalResult {
  double value = 0.0;  // √(minimal action)
  TransportPath path;
  int iterations = 0;
  double decrement = 0.0;  // final squared Newton decrement
  double continuity_residual = 0.0;
};

/// Minimizes the discrete action between μ0 and μ1 on a grid of K steps.
/// Throws contract_error on bad inputs and numerical_failure if Newton does
/// not converge.
PrimalResult primal_w2(const MarkovTriple& triple, const Measure& mu0, const Measure& mu1, int K,
                       const TransportOptions& options = {});

/// Discrete Hamilton–Jacobi subsolution: one potential per step (φ¹…φᴷ) on
/// a time horizon T, satisfying at every interior node k
///   ⟨(φ^{k+1} − φ^k)/h, μ⟩ + ¼(Γ(μ,φ^k) + Γ(μ,φ^{k+1})) ≤ 0  for all μ,
/// with h = T/K. The certified objective is
///   ⟨φᴷ,μ₁⟩ − ⟨φ¹,μ₀⟩ − (h/4)(Γ(μ₀,φ¹) + Γ(μ₁,φᴷ)),
/// and the discrete 𝒲² is at least 2T·objective.
struct HJWitness {
  int K = 0;
  double horizon = 1.0;
  std::vector<VertexFunction> phi;
  double objective = 0.0;
  double max_violation = 0.0;  // certified upper bound over the interior nodes
};

struct DualResult {
  double value = 0.0;  // √(2·objective), a lower value of the discrete 𝒲
  HJWitness witness;
  int rounds = 0;
};

/// Dual lower value with a certified witness, warm-started from the primal
/// minimizer. Throws numerical_failure if the witness cannot be certified.
DualResult dual_w2_lower(const MarkovTriple& triple, const Measure& mu0, const Measure& mu1,
                         int K, const TransportOptions& options = {});

/// Certified dual objective of given step potentials after shifting each by
/// a constant so that every node constraint holds with equality.
HJWitness certify_witness(const MarkovTriple& triple, const Measure& mu0, const Measure& mu1,
                          std::vector<VertexFunction> phi, double horizon = 1.0);

/// Largest certified violation of the node constraints of a witness.
double witness_violation(const MarkovTriple& triple, const HJWitness& witness);

/// Maximum over the probability simplex of a concave function
/// ⟨a, μ⟩ + Σ_edges c_e·Λ(μ)(e) with c_e ≥ 0 (edges as in triple.edges()).
struct SimplexMaximum {
  double value = 0.0;       // value at the returned point
  double upper_bound = 0.0;  // value + Frank–Wolfe gap: certified maximum bound
  Measure argmax;
  int iterations = 0;
};

SimplexMaximum maximize_on_simplex(const MarkovTriple& triple, const Vector& linear,
                                   const Vector& edge_weights);

/// sup_μ ⟨φ̇, μ⟩ + ½Γ(μ, φ) over probability measures, with a maximizer.
SimplexMaximum hj_max_violation(const MarkovTriple& triple, const VertexFunction& phidot,
                                const VertexFunction& phi);

struct GeodesicResult {
  TransportPath path;
  double value = 0.0;
  /// max_k |K·(step action) / (total action) − 1| after reparameterization.
  double speed_deviation = 0.0;
  /// True if an endpoint with zero masses was mixed with π.
  bool mixed = false;
};

/// Primal minimizer reparameterized to constant speed; endpoints are exact
/// (after mixing, if any).
GeodesicResult geodesic(const MarkovTriple& triple, const Measure& mu0, const Measure& mu1, int K,
                        const TransportOptions& options = {});

struct MetricTensorSolve {
  Measure mu;
  Vector s;
  VertexFunction psi;  // K_μψ = s, normalized to Σψ = 0
  double value = 0.0;  // G(μ,s) = ⟨s,ψ⟩
  double residual = 0.0;
  bool mixed = false;
};

/// Solves K_μψ = s with K_μψ = −∇·(Λ(μ)∇ψ). Requires Σs = 0 and μ ≥ 0 (zero
/// masses are mixed with π). Throws std::domain_error if the system is
/// singular beyond constants.
MetricTensorSolve metric_tensor(const MarkovTriple& triple, const Measure& mu, const Vector& s,
                                const TransportOptions& options = {});

}  // namespace srf
