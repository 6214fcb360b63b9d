#pragma once

// Static Markov-triple primitives: the logarithmic mean, Laplacians,
// integrated carre du champ operators and relative entropy.

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace srf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// One real per state. A VertexFunction is a potential or density, a Measure
// carries nonnegative masses. EdgeField is indexed by ordered pairs (x,y);
// the diagonal is ignored.
using VertexFunction = Vector;
using Measure = Vector;
using EdgeField = Matrix;

/// Logarithmic mean (s-t)/(ln s - ln t), with Λ(s,s)=s and Λ(s,0)=0.
double log_mean(double s, double t);

struct LogMeanPartials {
  double d1 = 0.0;
  double d2 = 0.0;
};

/// First partials of the logarithmic mean. Requires s,t > 0.
LogMeanPartials log_mean_partials(double s, double t);

struct LogMeanHessian {
  double d11 = 0.0;
  double d12 = 0.0;
  double d22 = 0.0;
};

/// Second partials of the logarithmic mean. Requires s,t > 0.
LogMeanHessian log_mean_hessian(double s, double t);

/// Unordered edge x < y carrying a positive rate in at least one direction.
struct Edge {
  int x = 0;
  int y = 0;
};

/// A finite reversible irreducible Markov chain (states, rates, invariant
/// probability). Rates are stored with the generator diagonal
/// Q(x,x) = -sum_{y != x} Q(x,y).
class MarkovTriple {
 public:
  /// Off-diagonal entries of `rates` are taken as given; the diagonal is
  /// overwritten. Throws contract_error on shape problems and
  /// validation_error on negative rates, non-probability pi, detailed-balance
  /// failure (relative tolerance `tol`) or reducibility.
  MarkovTriple(std::vector<std::string> states, Matrix rates, Vector pi,
               double tol = 1e-9);

  int size() const { return static_cast<int>(states_.size()); }
  const std::vector<std::string>& states() const { return states_; }
  const Matrix& rates() const { return rates_; }
  double rate(int x, int y) const { return rates_(x, y); }
  const Vector& pi() const { return pi_; }
  const std::vector<Edge>& edges() const { return edges_; }

  /// Index of a state name, or -1.
  int index_of(const std::string& name) const;

  /// Same chain with all rates multiplied by `factor` > 0.
  MarkovTriple scaled(double factor) const;

 private:
  std::vector<std::string> states_;
  Matrix rates_;
  Vector pi_;
  std::vector<Edge> edges_;
};

/// Build a generator from off-diagonal rates (diagonal set to minus row sums).
Matrix generator_from_offdiagonal(const Matrix& rates);

/// Connectedness of the graph of positive off-diagonal entries.
bool is_irreducible(const Matrix& rates);

/// Unordered edges with Q(x,y) > 0 or Q(y,x) > 0.
std::vector<Edge> edges_of(const Matrix& rates);

/// Discrete gradient ∇ψ(x,y) = ψ(y) - ψ(x).
EdgeField gradient(const VertexFunction& psi);

/// Λ(μ)(x,y) = Λ(μ(x)Q(x,y), μ(y)Q(y,x)). Symmetric by construction.
EdgeField lambda_weights(const MarkovTriple& triple, const Measure& mu);

/// Δψ(x) = Σ_y [ψ(y) - ψ(x)] Q(x,y).
VertexFunction laplacian(const MarkovTriple& triple, const VertexFunction& psi);

/// Δ̂σ(x) = Σ_y Q(y,x)σ(y) - Q(x,y)σ(x).
Vector adjoint_laplacian(const MarkovTriple& triple, const Measure& sigma);

/// ⟨φ,ψ⟩_π = Σ φ(x)ψ(x)π(x).
double pi_inner(const MarkovTriple& triple, const Vector& a, const Vector& b);

/// Γ(μ,ψ) = ½ Σ_{x,y} (∇ψ(x,y))² Λ(μ)(x,y).
double gamma(const MarkovTriple& triple, const Measure& mu,
             const VertexFunction& psi);

enum class BoundaryPolicy {
  reject,  // nonpositive masses throw std::domain_error
  extend,  // one-sided limits: the result may be +infinity
};

/// Γ₂(μ,ψ) = ½⟨∇ψ, ∇ψ·Δ̂Λ(μ)⟩ - ⟨∇ψ, ∇Δψ·Λ(μ)⟩ with ρ = μ/π.
double gamma2(const MarkovTriple& triple, const Measure& mu,
              const VertexFunction& psi,
              BoundaryPolicy policy = BoundaryPolicy::reject);

/// ∂ₜΓ(μ,ψ) = ⟨∇ψ, ∇ψ·∂ₜΛ(μ)⟩ for the instantaneous rate derivative `rate_dot`.
double dt_gamma(const MarkovTriple& triple, const Matrix& rate_dot,
                const Measure& mu, const VertexFunction& psi);

/// Relative entropy Σ μ log(μ/π) with 0 log 0 = 0.
double entropy(const MarkovTriple& triple, const Measure& mu);

// Quadratic forms in ψ: Γ(μ,ψ) = ψᵀ B ψ and so on. All are symmetric and
// annihilate constants.

/// B with Γ(μ,ψ) = ψᵀBψ; equals the weighted Laplacian K_μ.
Matrix gamma_form(const MarkovTriple& triple, const Measure& mu);

/// A₂ with Γ₂(μ,ψ) = ψᵀA₂ψ. Requires μ > 0.
Matrix gamma2_form(const MarkovTriple& triple, const Measure& mu);

/// C with ∂ₜΓ(μ,ψ) = ψᵀCψ.
Matrix dt_gamma_form(const MarkovTriple& triple, const Matrix& rate_dot,
                     const Measure& mu);

/// Weighted graph Laplacian L with (Lψ)(x) = Σ_y w(x,y)(ψ(x)-ψ(y)) for a
/// symmetric edge weight table.
Matrix weighted_laplacian(const EdgeField& weights);

/// Product chain taking independent jumps in each factor; states are named
/// "a|b" and ordered with the second factor running fastest.
MarkovTriple product_triple(const MarkovTriple& a, const MarkovTriple& b);

/// Simple sanity checks used by many operations.
void require_same_size(const MarkovTriple& triple, const Vector& v,
                       const char* what);
bool is_probability(const Vector& mu, double tol = 1e-12);

}  // namespace srf
