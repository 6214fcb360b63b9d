#include "srf/core_chain.hpp"

#include "srf/errors.hpp"

#include <cmath>
#include <limits>
#include <queue>
#include <sstream>
#include <stdexcept>

namespace srf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Below this |w| the closed forms suffer cancellation and the Taylor series
// (30 terms, truncation < 1e-33) is used instead.
constexpr double kSeriesRadius = 1.0;
constexpr int kSeriesTerms = 30;

// w = ln s - ln t, computed without cancellation when s ≈ t.
double log_ratio(double s, double t) {
  const double d = s - t;
  if (std::abs(d) < 0.5 * t) return std::log1p(d / t);
  return std::log(s) - std::log(t);
}

// g(w) = expm1(w)/w = Σ w^n/(n+1)!
double g_series(double w) {
  double term = 1.0;  // w^n/(n+1)!
  double sum = 1.0;
  for (int n = 1; n < kSeriesTerms; ++n) {
    term *= w / static_cast<double>(n + 1);
    sum += term;
  }
  return sum;
}

// h(w) = (e^{-w} - 1 + w)/w² = Σ (-w)^n/(n+2)!; this is ∂₁Λ(s,t) for w = ln(s/t).
double h_fn(double w) {
  if (std::abs(w) <= kSeriesRadius) {
    double term = 0.5;  // (-w)^n/(n+2)!
    double sum = 0.5;
    for (int n = 1; n < kSeriesTerms; ++n) {
      term *= -w / static_cast<double>(n + 2);
      sum += term;
    }
    return sum;
  }
  return (std::exp(-w) - 1.0 + w) / (w * w);
}

// h'(w) = [2 - w - (w+2)e^{-w}]/w³ = Σ_{n≥1} n(-1)^n w^{n-1}/(n+2)!.
double dh_fn(double w) {
  if (std::abs(w) <= kSeriesRadius) {
    double c = 1.0 / 6.0;  // 1/(n+2)! at n = 1
    double wp = 1.0;       // w^{n-1}
    double sum = 0.0;
    for (int n = 1; n < kSeriesTerms; ++n) {
      const double sign = (n % 2 == 0) ? 1.0 : -1.0;
      sum += sign * n * wp * c;
      wp *= w;
      c /= static_cast<double>(n + 3);
    }
    return sum;
  }
  return (2.0 - w - (w + 2.0) * std::exp(-w)) / (w * w * w);
}

void require_positive(double s, double t, const char* who) {
  if (!(s > 0.0) || !(t > 0.0)) {
    std::ostringstream os;
    os << who << ": arguments must be strictly positive (got " << s << ", " << t
       << ")";
    throw std::domain_error(os.str());
  }
}

void require_square(const Matrix& m, int n, const char* what) {
  if (m.rows() != n || m.cols() != n) {
    std::ostringstream os;
    os << what << ": expected " << n << "x" << n << " table, got " << m.rows()
       << "x" << m.cols();
    throw contract_error(os.str());
  }
}

}  // namespace

double log_mean(double s, double t) {
  if (!(s >= 0.0) || !(t >= 0.0)) {
    std::ostringstream os;
    os << "log_mean: negative argument (" << s << ", " << t << ")";
    throw std::domain_error(os.str());
  }
  if (s == 0.0 || t == 0.0) return 0.0;
  if (s == t) return s;
  const double w = log_ratio(s, t);
  if (std::abs(w) <= kSeriesRadius) return t * g_series(w);
  return (s - t) / w;
}

LogMeanPartials log_mean_partials(double s, double t) {
  require_positive(s, t, "log_mean_partials");
  const double w = log_ratio(s, t);
  return {h_fn(w), h_fn(-w)};
}

LogMeanHessian log_mean_hessian(double s, double t) {
  require_positive(s, t, "log_mean_hessian");
  const double w = log_ratio(s, t);
  const double d = dh_fn(w);
  return {d / s, -d / t, dh_fn(-w) / t};
}

Matrix generator_from_offdiagonal(const Matrix& rates) {
  Matrix q = rates;
  for (Eigen::Index x = 0; x < q.rows(); ++x) {
    q(x, x) = 0.0;
    q(x, x) = -q.row(x).sum();
  }
  return q;
}

bool is_irreducible(const Matrix& rates) {
  const auto n = rates.rows();
  if (n == 0) return false;
  std::vector<char> seen(static_cast<size_t>(n), 0);
  std::queue<Eigen::Index> todo;
  todo.push(0);
  seen[0] = 1;
  Eigen::Index count = 1;
  while (!todo.empty()) {
    const auto x = todo.front();
    todo.pop();
    for (Eigen::Index y = 0; y < n; ++y) {
      if (y != x && !seen[static_cast<size_t>(y)] && rates(x, y) > 0.0) {
        seen[static_cast<size_t>(y)] = 1;
        ++count;
        todo.push(y);
      }
    }
  }
  return count == n;
}

std::vector<Edge> edges_of(const Matrix& rates) {
  std::vector<Edge> out;
  for (int x = 0; x < rates.rows(); ++x)
    for (int y = x + 1; y < rates.cols(); ++y)
      if (rates(x, y) > 0.0 || rates(y, x) > 0.0) out.push_back({x, y});
  return out;
}

MarkovTriple::MarkovTriple(std::vector<std::string> states, Matrix rates,
                           Vector pi, double tol)
    : states_(std::move(states)), rates_(std::move(rates)), pi_(std::move(pi)) {
  const int n = size();
  if (n == 0) throw contract_error("MarkovTriple: empty state set");
  require_square(rates_, n, "MarkovTriple rates");
  if (pi_.size() != n) throw contract_error("MarkovTriple: pi has wrong length");
  for (int x = 0; x < n; ++x) {
    for (int y = 0; y < n; ++y) {
      if (x == y) continue;
      if (!(rates_(x, y) >= 0.0) || !std::isfinite(rates_(x, y))) {
        std::ostringstream os;
        os << "MarkovTriple: invalid rate Q(" << states_[x] << "," << states_[y]
           << ") = " << rates_(x, y);
        throw validation_error(os.str());
      }
    }
    if (!(pi_(x) > 0.0)) {
      std::ostringstream os;
      os << "MarkovTriple: pi(" << states_[x] << ") = " << pi_(x)
         << " is not strictly positive";
      throw validation_error(os.str());
    }
  }
  if (std::abs(pi_.sum() - 1.0) > 1e-9) {
    std::ostringstream os;
    os << "MarkovTriple: pi sums to " << pi_.sum() << ", not 1";
    throw validation_error(os.str());
  }
  for (int x = 0; x < n; ++x) {
    for (int y = x + 1; y < n; ++y) {
      const double a = rates_(x, y) * pi_(x);
      const double b = rates_(y, x) * pi_(y);
      if (std::abs(a - b) > tol * std::max(a, b)) {
        std::ostringstream os;
        os << "MarkovTriple: detailed balance fails on (" << states_[x] << ","
           << states_[y] << "): " << a << " vs " << b;
        throw validation_error(os.str());
      }
    }
  }
  if (!is_irreducible(rates_))
    throw validation_error("MarkovTriple: rate graph is not connected");
  rates_ = generator_from_offdiagonal(rates_);
  edges_ = edges_of(rates_);
}

int MarkovTriple::index_of(const std::string& name) const {
  for (int i = 0; i < size(); ++i)
    if (states_[static_cast<size_t>(i)] == name) return i;
  return -1;
}

MarkovTriple MarkovTriple::scaled(double factor) const {
  if (!(factor > 0.0)) throw contract_error("MarkovTriple::scaled: factor must be > 0");
  return MarkovTriple(states_, rates_ * factor, pi_);
}

void require_same_size(const MarkovTriple& triple, const Vector& v,
                       const char* what) {
  if (v.size() != triple.size()) {
    std::ostringstream os;
    os << what << ": length " << v.size() << " does not match " << triple.size()
       << " states";
    throw contract_error(os.str());
  }
}

bool is_probability(const Vector& mu, double tol) {
  if (mu.size() == 0) return false;
  for (Eigen::Index i = 0; i < mu.size(); ++i)
    if (!(mu(i) >= 0.0)) return false;
  return std::abs(mu.sum() - 1.0) <= tol;
}

EdgeField gradient(const VertexFunction& psi) {
  const auto n = psi.size();
  EdgeField g(n, n);
  for (Eigen::Index x = 0; x < n; ++x)
    for (Eigen::Index y = 0; y < n; ++y) g(x, y) = psi(y) - psi(x);
  return g;
}

EdgeField lambda_weights(const MarkovTriple& triple, const Measure& mu) {
  require_same_size(triple, mu, "lambda_weights");
  const int n = triple.size();
  EdgeField w = EdgeField::Zero(n, n);
  const Matrix& q = triple.rates();
  for (const Edge& e : triple.edges()) {
    const double v = log_mean(mu(e.x) * q(e.x, e.y), mu(e.y) * q(e.y, e.x));
    w(e.x, e.y) = v;
    w(e.y, e.x) = v;
  }
  return w;
}

VertexFunction laplacian(const MarkovTriple& triple, const VertexFunction& psi) {
  require_same_size(triple, psi, "laplacian");
  return triple.rates() * psi;
}

Vector adjoint_laplacian(const MarkovTriple& triple, const Measure& sigma) {
  require_same_size(triple, sigma, "adjoint_laplacian");
  return triple.rates().transpose() * sigma;
}

double pi_inner(const MarkovTriple& triple, const Vector& a, const Vector& b) {
  require_same_size(triple, a, "pi_inner");
  require_same_size(triple, b, "pi_inner");
  return (a.array() * b.array() * triple.pi().array()).sum();
}

double gamma(const MarkovTriple& triple, const Measure& mu,
             const VertexFunction& psi) {
  require_same_size(triple, mu, "gamma");
  require_same_size(triple, psi, "gamma");
  const Matrix& q = triple.rates();
  double sum = 0.0;
  for (const Edge& e : triple.edges()) {
    const double d = psi(e.y) - psi(e.x);
    if (d == 0.0) continue;
    sum += d * d * log_mean(mu(e.x) * q(e.x, e.y), mu(e.y) * q(e.y, e.x));
  }
  return sum;
}

namespace {

// Partials of Λ at (ρx, ρy), extended to the boundary of the positive
// quadrant: ∂₁Λ(0,t) = +∞, ∂₂Λ(0,t) = 0, and the diagonal value ½ at (0,0).
LogMeanPartials extended_partials(double a, double b) {
  if (a > 0.0 && b > 0.0) return log_mean_partials(a, b);
  if (a <= 0.0 && b <= 0.0) return {0.5, 0.5};
  if (a <= 0.0) return {kInf, 0.0};
  return {0.0, kInf};
}

// Δ̂Λ(μ) on edge e: [∂₁Λ(ρx,ρy)Δρ(x) + ∂₂Λ(ρx,ρy)Δρ(y)]·Q(x,y)π(x).
double hat_delta_lambda(const Matrix& q, const Vector& pi, const Vector& rho,
                        const Vector& lap_rho, const Edge& e, bool extend) {
  const double a = rho(e.x);
  const double b = rho(e.y);
  const LogMeanPartials p =
      extend ? extended_partials(a, b) : log_mean_partials(a, b);
  // ∞·0 = 0: a vanishing Laplacian contributes nothing even against an
  // infinite partial.
  const double tx = lap_rho(e.x) == 0.0 ? 0.0 : p.d1 * lap_rho(e.x);
  const double ty = lap_rho(e.y) == 0.0 ? 0.0 : p.d2 * lap_rho(e.y);
  return (tx + ty) * q(e.x, e.y) * pi(e.x);
}

void require_interior(const Measure& mu, const char* who) {
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    if (!(mu(i) > 0.0)) {
      std::ostringstream os;
      os << who << ": measure must be strictly positive (entry " << i << " = "
         << mu(i) << ")";
      throw std::domain_error(os.str());
    }
  }
}

// ∂ₜΛ(μ) on edge e for rate derivative qdot.
double dt_lambda(const Matrix& q, const Matrix& qdot, const Measure& mu,
                 const Edge& e) {
  const double s = mu(e.x) * q(e.x, e.y);
  const double t = mu(e.y) * q(e.y, e.x);
  if (s > 0.0 && t > 0.0) {
    const LogMeanPartials p = log_mean_partials(s, t);
    return p.d1 * mu(e.x) * qdot(e.x, e.y) + p.d2 * mu(e.y) * qdot(e.y, e.x);
  }
  // On the boundary s·∂₁Λ(s,t) → 0 as s → 0 and ∂₂Λ(0,t) = 0, so an
  // active edge with a vanishing endpoint mass has no first-order variation.
  return 0.0;
}

}  // namespace

double gamma2(const MarkovTriple& triple, const Measure& mu,
              const VertexFunction& psi, BoundaryPolicy policy) {
  require_same_size(triple, mu, "gamma2");
  require_same_size(triple, psi, "gamma2");
  const bool extend = policy == BoundaryPolicy::extend;
  if (!extend) require_interior(mu, "gamma2");
  for (Eigen::Index i = 0; i < mu.size(); ++i)
    if (mu(i) < 0.0) throw std::domain_error("gamma2: negative mass");
  const Matrix& q = triple.rates();
  const Vector& pi = triple.pi();
  const Vector rho = mu.cwiseQuotient(pi);
  const Vector lap_rho = q * rho;
  const Vector lap_psi = q * psi;
  // Sums over unordered edges; each equals the ordered-pair inner product
  // ⟨Φ,Ψ⟩ = ½Σ_{x,y} ΦΨ since every integrand is symmetric in (x,y).
  double first = 0.0;
  double second = 0.0;
  for (const Edge& e : triple.edges()) {
    const double d = psi(e.y) - psi(e.x);
    if (d == 0.0) continue;
    const double dl = hat_delta_lambda(q, pi, rho, lap_rho, e, extend);
    first += d * d * dl;
    const double lam = log_mean(mu(e.x) * q(e.x, e.y), mu(e.y) * q(e.y, e.x));
    second += d * (lap_psi(e.y) - lap_psi(e.x)) * lam;
  }
  if (std::isinf(first)) return first;
  return 0.5 * first - second;
}

double dt_gamma(const MarkovTriple& triple, const Matrix& rate_dot,
                const Measure& mu, const VertexFunction& psi) {
  require_same_size(triple, mu, "dt_gamma");
  require_same_size(triple, psi, "dt_gamma");
  if (rate_dot.size() == 0)
    throw contract_error("dt_gamma: rate derivative is not available");
  require_square(rate_dot, triple.size(), "dt_gamma rate derivative");
  const Matrix& q = triple.rates();
  double sum = 0.0;
  for (const Edge& e : triple.edges()) {
    const double d = psi(e.y) - psi(e.x);
    if (d == 0.0) continue;
    sum += d * d * dt_lambda(q, rate_dot, mu, e);
  }
  return sum;
}

double entropy(const MarkovTriple& triple, const Measure& mu) {
  require_same_size(triple, mu, "entropy");
  double sum = 0.0;
  for (Eigen::Index x = 0; x < mu.size(); ++x) {
    if (mu(x) < 0.0) throw std::domain_error("entropy: negative mass");
    if (mu(x) > 0.0) sum += mu(x) * std::log(mu(x) / triple.pi()(x));
  }
  return sum;
}

Matrix weighted_laplacian(const EdgeField& weights) {
  const auto n = weights.rows();
  Matrix l = Matrix::Zero(n, n);
  for (Eigen::Index x = 0; x < n; ++x) {
    for (Eigen::Index y = x + 1; y < n; ++y) {
      const double w = weights(x, y);
      if (w == 0.0) continue;
      l(x, x) += w;
      l(y, y) += w;
      l(x, y) -= w;
      l(y, x) -= w;
    }
  }
  return l;
}

Matrix gamma_form(const MarkovTriple& triple, const Measure& mu) {
  return weighted_laplacian(lambda_weights(triple, mu));
}

Matrix gamma2_form(const MarkovTriple& triple, const Measure& mu) {
  require_same_size(triple, mu, "gamma2_form");
  require_interior(mu, "gamma2_form");
  const int n = triple.size();
  const Matrix& q = triple.rates();
  const Vector& pi = triple.pi();
  const Vector rho = mu.cwiseQuotient(pi);
  const Vector lap_rho = q * rho;
  EdgeField dl = EdgeField::Zero(n, n);
  for (const Edge& e : triple.edges()) {
    const double v = hat_delta_lambda(q, pi, rho, lap_rho, e, false);
    dl(e.x, e.y) = v;
    dl(e.y, e.x) = v;
  }
  const Matrix b = gamma_form(triple, mu);
  const Matrix bd = b * q;
  Matrix a = 0.5 * weighted_laplacian(dl) - 0.5 * (bd + bd.transpose());
  return 0.5 * (a + a.transpose());
}

Matrix dt_gamma_form(const MarkovTriple& triple, const Matrix& rate_dot,
                     const Measure& mu) {
  require_same_size(triple, mu, "dt_gamma_form");
  if (rate_dot.size() == 0)
    throw contract_error("dt_gamma_form: rate derivative is not available");
  require_square(rate_dot, triple.size(), "dt_gamma_form rate derivative");
  const int n = triple.size();
  EdgeField w = EdgeField::Zero(n, n);
  for (const Edge& e : triple.edges()) {
    const double v = dt_lambda(triple.rates(), rate_dot, mu, e);
    w(e.x, e.y) = v;
    w(e.y, e.x) = v;
  }
  return weighted_laplacian(w);
}

MarkovTriple product_triple(const MarkovTriple& a, const MarkovTriple& b) {
  const int na = a.size();
  const int nb = b.size();
  const int n = na * nb;
  std::vector<std::string> names;
  names.reserve(static_cast<size_t>(n));
  Vector pi(n);
  for (int i = 0; i < na; ++i)
    for (int j = 0; j < nb; ++j) {
      names.push_back(a.states()[i] + "|" + b.states()[j]);
      pi(i * nb + j) = a.pi()(i) * b.pi()(j);
    }
  Matrix q = Matrix::Zero(n, n);
  for (int i = 0; i < na; ++i)
    for (int j = 0; j < nb; ++j) {
      const int x = i * nb + j;
      for (int k = 0; k < na; ++k)
        if (k != i) q(x, k * nb + j) = a.rate(i, k);
      for (int l = 0; l < nb; ++l)
        if (l != j) q(x, i * nb + l) = b.rate(j, l);
    }
  pi /= pi.sum();
  return MarkovTriple(std::move(names), std::move(q), std::move(pi));
}

}  // namespace srf
