#include "srf/transport.hpp"

#include "srf/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace srf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Edge list with the two directed rates, and the signed incidence matrix B
// (column e = δ_x − δ_y for the edge x < y), so that ∇·V = B·V and
// ∇ψ(x,y) = −(Bᵀψ)_e.
struct EdgeTable {
  std::vector<Edge> edges;
  std::vector<double> qxy;
  std::vector<double> qyx;
  Matrix incidence;

  explicit EdgeTable(const MarkovTriple& triple) : edges(triple.edges()) {
    const int n = triple.size();
    incidence = Matrix::Zero(n, static_cast<Eigen::Index>(edges.size()));
    for (size_t e = 0; e < edges.size(); ++e) {
      qxy.push_back(triple.rate(edges[e].x, edges[e].y));
      qyx.push_back(triple.rate(edges[e].y, edges[e].x));
      incidence(edges[e].x, static_cast<Eigen::Index>(e)) = 1.0;
      incidence(edges[e].y, static_cast<Eigen::Index>(e)) = -1.0;
    }
  }

  int size() const { return static_cast<int>(edges.size()); }

  double mobility(const Measure& mu, int e) const {
    const Edge& ed = edges[static_cast<size_t>(e)];
    return log_mean(mu(ed.x) * qxy[static_cast<size_t>(e)], mu(ed.y) * qyx[static_cast<size_t>(e)]);
  }

  Vector mobilities(const Measure& mu) const {
    Vector m(size());
    for (int e = 0; e < size(); ++e) m(e) = mobility(mu, e);
    return m;
  }

  // Gradient of Λ(μ)(e) with respect to μ (nonzero at x and y only).
  // At a zero mass Λ vanishes identically in the other argument, so the
  // finite partials are 0; the infinite one is never needed because a zero
  // mass never moves (endpoints are fixed and interior masses change
  // multiplicatively once small).
  void mobility_gradient(const Measure& mu, int e, double& gx, double& gy) const {
    const Edge& ed = edges[static_cast<size_t>(e)];
    const double a = qxy[static_cast<size_t>(e)], b = qyx[static_cast<size_t>(e)];
    if (!(mu(ed.x) * a > 0.0 && mu(ed.y) * b > 0.0)) {
      gx = gy = 0.0;
      return;
    }
    const LogMeanPartials p = log_mean_partials(mu(ed.x) * a, mu(ed.y) * b);
    gx = a * p.d1;
    gy = b * p.d2;
  }

  void mobility_hessian(const Measure& mu, int e, double& hxx, double& hxy, double& hyy) const {
    const Edge& ed = edges[static_cast<size_t>(e)];
    const double a = qxy[static_cast<size_t>(e)], b = qyx[static_cast<size_t>(e)];
    if (!(mu(ed.x) * a > 0.0 && mu(ed.y) * b > 0.0)) {
      hxx = hxy = hyy = 0.0;
      return;
    }
    const LogMeanHessian h = log_mean_hessian(mu(ed.x) * a, mu(ed.y) * b);
    hxx = a * a * h.d11;
    hxy = a * b * h.d12;
    hyy = b * b * h.d22;
  }

  Matrix laplacian(const Vector& weights) const {
    return incidence * weights.asDiagonal() * incidence.transpose();
  }

  // (Bᵀψ)_e = ψ(x) − ψ(y).
  Vector edge_difference(const Vector& psi) const { return incidence.transpose() * psi; }
};

// Moore–Penrose inverse of a symmetric positive semidefinite matrix.
Matrix pseudo_inverse(const Matrix& l) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(l);
  const Vector& ev = eig.eigenvalues();
  const double cut = 1e-13 * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  Vector inv(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) inv(i) = ev(i) > cut ? 1.0 / ev(i) : 0.0;
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

// One step of the discrete path: averaged mobility m, potential ψ = L⁺d and
// the step cost d·L⁺d (+∞ if d is not in the range of L).
struct Step {
  Vector m;
  Matrix pinv;
  Vector psi;
  Vector g;  // Bᵀψ
  double cost = 0.0;
};

Step evaluate_step(const EdgeTable& et, const Measure& a, const Measure& b) {
  Step st;
  st.m = 0.5 * (et.mobilities(a) + et.mobilities(b));
  const Matrix l = et.laplacian(st.m);
  st.pinv = pseudo_inverse(l);
  // Both measures have unit mass; drop the rounding-level mean of d.
  const Vector d = (b - a).array() - (b - a).mean();
  st.psi = st.pinv * d;
  st.g = et.edge_difference(st.psi);
  // A difference outside the range of L (disconnected mobility) costs +∞.
  const double scale = d.cwiseAbs().maxCoeff();
  st.cost = (l * st.psi - d).cwiseAbs().maxCoeff() > 1e-9 * scale + 1e-15 ? kInf : d.dot(st.psi);
  return st;
}

double path_objective(const EdgeTable& et, const std::vector<Measure>& mu) {
  const int K = static_cast<int>(mu.size()) - 1;
  double j = 0.0;
  for (int k = 1; k <= K; ++k) j += evaluate_step(et, mu[static_cast<size_t>(k - 1)], mu[static_cast<size_t>(k)]).cost;
  return K * j;
}

void check_measure(const MarkovTriple& triple, const Measure& mu, const char* what) {
  require_same_size(triple, mu, what);
  if (!is_probability(mu, 1e-9))
    throw contract_error(std::string(what) + " must be a probability measure");
}

Measure mix_if_needed(const MarkovTriple& triple, const Measure& mu, double eps, bool& mixed) {
  if (mu.minCoeff() > 0.0) return mu;
  mixed = true;
  return (1.0 - eps) * mu + eps * triple.pi();
}

// Zero-sum coordinates over the free states of a node: μ = μ_ref + U z with
// columns e_f − e_last for the free states f before the last free one.
// Newton coordinates of one interior node. The largest mass absorbs every
// change. Masses far below it move multiplicatively: a coordinate z changes
// μ(x) to μ(x)·e^z, in which the logarithmic mean is smooth even at rounding
// level, whereas in linear coordinates Newton can at most double a tiny mass
// per iteration. The remaining masses move linearly.
struct NodeChart {
  Eigen::Index top = 0;
  std::vector<int> linear;
  std::vector<int> logarithmic;
  Matrix basis;  // first-order change of μ per coordinate
};

NodeChart node_chart(const Measure& mu) {
  NodeChart c;
  const double peak = mu.maxCoeff(&c.top);
  for (Eigen::Index x = 0; x < mu.size(); ++x) {
    if (x == c.top) continue;
    (mu(x) < 1e-2 * peak ? c.logarithmic : c.linear).push_back(static_cast<int>(x));
  }
  const int nl = static_cast<int>(c.linear.size());
  c.basis = Matrix::Zero(mu.size(), nl + static_cast<int>(c.logarithmic.size()));
  for (int i = 0; i < nl; ++i) {
    c.basis(c.linear[static_cast<size_t>(i)], i) = 1.0;
    c.basis(c.top, i) = -1.0;
  }
  for (size_t i = 0; i < c.logarithmic.size(); ++i) {
    const int x = c.logarithmic[i];
    c.basis(x, nl + static_cast<int>(i)) = mu(x);
    c.basis(c.top, nl + static_cast<int>(i)) = -mu(x);
  }
  return c;
}

// Moves a node along its chart by α·z.
Measure chart_step(const NodeChart& c, const Measure& mu, const Vector& z, double alpha) {
  Measure out = mu;
  const int nl = static_cast<int>(c.linear.size());
  double moved = 0.0;
  for (int i = 0; i < nl; ++i) {
    const int x = c.linear[static_cast<size_t>(i)];
    out(x) = mu(x) + alpha * z(i);
    moved += out(x) - mu(x);
  }
  for (size_t i = 0; i < c.logarithmic.size(); ++i) {
    const int x = c.logarithmic[i];
    out(x) = mu(x) * std::exp(alpha * z(nl + static_cast<int>(i)));
    moved += out(x) - mu(x);
  }
  out(c.top) = mu(c.top) - moved;
  return out;
}

// Solves the symmetric block-tridiagonal system with diagonal blocks d[k] and
// couplings c[k] = H(k, k+1).
std::vector<Vector> solve_block_tridiagonal(std::vector<Matrix> d, const std::vector<Matrix>& c,
                                            std::vector<Vector> r) {
  const size_t m = d.size();
  std::vector<Eigen::LDLT<Matrix>> fac(m);
  for (size_t k = 0; k < m; ++k) {
    if (k > 0) {
      d[k] -= c[k - 1].transpose() * fac[k - 1].solve(c[k - 1]);
      r[k] -= c[k - 1].transpose() * fac[k - 1].solve(r[k - 1]);
    }
    fac[k].compute(d[k]);
    if (fac[k].info() != Eigen::Success)
      throw numerical_failure("transport: Newton system factorization failed");
  }
  std::vector<Vector> x(m);
  for (size_t k = m; k-- > 0;) {
    Vector rhs = r[k];
    if (k + 1 < m) rhs -= c[k] * x[k + 1];
    x[k] = fac[k].solve(rhs);
  }
  return x;
}

EdgeField flux_field(const EdgeTable& et, const Vector& v, int n) {
  EdgeField f = EdgeField::Zero(n, n);
  for (int e = 0; e < et.size(); ++e) {
    const Edge& ed = et.edges[static_cast<size_t>(e)];
    f(ed.x, ed.y) = v(e);
    f(ed.y, ed.x) = -v(e);
  }
  return f;
}

// Pins interior-node masses below rounding level to zero and releases
// pinned masses whose return lowers the objective. Returns true if the set
// changed; j is updated to the objective of the modified path.
TransportPath assemble_path(const EdgeTable& et, const std::vector<Measure>& mu, int n) {
  TransportPath path;
  path.K = static_cast<int>(mu.size()) - 1;
  path.mu = mu;
  double j = 0.0;
  for (int k = 1; k <= path.K; ++k) {
    const Step st = evaluate_step(et, mu[static_cast<size_t>(k - 1)], mu[static_cast<size_t>(k)]);
    // V = −K·m∘(Bᵀψ) solves B V = −K d with the least action.
    const Vector v = -path.K * st.m.cwiseProduct(st.g);
    path.flux.push_back(flux_field(et, v, n));
    j += st.cost;
  }
  path.action = path.K * j;
  return path;
}

}  // namespace

double action(const MarkovTriple& triple, const TransportPath& path) {
  if (path.K < 1 || path.mu.size() != static_cast<size_t>(path.K + 1) ||
      path.flux.size() != static_cast<size_t>(path.K))
    throw contract_error("action: path shapes do not match its grid size");
  const EdgeTable et(triple);
  double total = 0.0;
  for (int k = 1; k <= path.K; ++k) {
    const Measure& a = path.mu[static_cast<size_t>(k - 1)];
    const Measure& b = path.mu[static_cast<size_t>(k)];
    require_same_size(triple, a, "path measure");
    const EdgeField& v = path.flux[static_cast<size_t>(k - 1)];
    if (v.rows() != triple.size() || v.cols() != triple.size())
      throw contract_error("action: flux shape does not match the triple");
    const Vector m = 0.5 * (et.mobilities(a) + et.mobilities(b));
    for (int e = 0; e < et.size(); ++e) {
      const Edge& ed = et.edges[static_cast<size_t>(e)];
      const double flow = v(ed.x, ed.y);
      if (flow == 0.0) continue;
      if (m(e) <= 0.0) return kInf;
      total += flow * flow / m(e);
    }
    // Fluxes across pairs without rates are not admissible.
    for (int x = 0; x < triple.size(); ++x)
      for (int y = 0; y < triple.size(); ++y)
        if (x != y && v(x, y) != 0.0 && triple.rate(x, y) == 0.0 && triple.rate(y, x) == 0.0)
          return kInf;
  }
  return total / path.K;
}

double continuity_residual(const TransportPath& path) {
  double r = 0.0;
  for (int k = 1; k <= path.K; ++k) {
    const Vector div = path.flux[static_cast<size_t>(k - 1)].rowwise().sum();
    const Vector res = path.mu[static_cast<size_t>(k)] - path.mu[static_cast<size_t>(k - 1)] + div / path.K;
    r = std::max(r, res.cwiseAbs().maxCoeff());
  }
  return r;
}

PrimalResult primal_w2(const MarkovTriple& triple, const Measure& mu0, const Measure& mu1, int K,
                       const TransportOptions& options) {
  check_measure(triple, mu0, "mu0");
  check_measure(triple, mu1, "mu1");
  if (K < 1) throw contract_error("primal_w2: grid size K must be >= 1");
  const int n = triple.size();
  const EdgeTable et(triple);
  PrimalResult res;

  // Start from the linear interpolation, pushed into the interior.
  std::vector<Measure> mu(static_cast<size_t>(K + 1));
  for (int k = 0; k <= K; ++k) {
    const double a = static_cast<double>(k) / K;
    Measure lin = (1.0 - a) * mu0 + a * mu1;
    if (k > 0 && k < K) lin = 0.9 * lin + 0.1 * triple.pi();
    mu[static_cast<size_t>(k)] = lin;
  }

  if (K > 1 && n > 1) {
    // Minimizers may rest on (or extremely close to) the boundary of the
    // simplex, where the logarithmic mean is not differentiable; see
    // NodeChart for the coordinates that keep Newton fast there.
    double j = path_objective(et, mu);
    bool converged = false;
    for (int it = 0; it < options.max_iterations; ++it) {
      res.iterations = it + 1;
      // Gradient and block-tridiagonal Hessian in the node measures.
      std::vector<Vector> grad(static_cast<size_t>(K - 1), Vector::Zero(n));
      std::vector<Matrix> diag(static_cast<size_t>(K - 1), Matrix::Zero(n, n));
      std::vector<Matrix> off(static_cast<size_t>(std::max(K - 2, 0)), Matrix::Zero(n, n));
      for (int k = 1; k <= K; ++k) {
        const Step st = evaluate_step(et, mu[static_cast<size_t>(k - 1)], mu[static_cast<size_t>(k)]);
        // Node j ∈ {k−1, k}: R_j = ±I − Σ_e b_e g_e (½∇Λ_e(μ^j))ᵀ.
        Matrix r[2];
        bool active[2] = {k - 1 >= 1, k <= K - 1};
        for (int side = 0; side < 2; ++side) {
          if (!active[side]) continue;
          const Measure& node = mu[static_cast<size_t>(k - 1 + side)];
          const double sign = side == 0 ? -1.0 : 1.0;
          r[side] = sign * Matrix::Identity(n, n);
          Vector& gr = grad[static_cast<size_t>(k - 2 + side)];
          Matrix& hd = diag[static_cast<size_t>(k - 2 + side)];
          gr += K * 2.0 * sign * st.psi;
          for (int e = 0; e < et.size(); ++e) {
            const Edge& ed = et.edges[static_cast<size_t>(e)];
            double gx, gy, hxx, hxy, hyy;
            et.mobility_gradient(node, e, gx, gy);
            et.mobility_hessian(node, e, hxx, hxy, hyy);
            const double ge = st.g(e);
            const double w = -K * ge * ge * 0.5;  // ∂J/∂m_e · ∂m_e/∂Λ_e
            gr(ed.x) += w * gx;
            gr(ed.y) += w * gy;
            hd(ed.x, ed.x) += w * hxx;
            hd(ed.x, ed.y) += w * hxy;
            hd(ed.y, ed.x) += w * hxy;
            hd(ed.y, ed.y) += w * hyy;
            // b_e (½∇Λ_e)ᵀ scaled by g_e.
            r[side](ed.x, ed.x) -= ge * 0.5 * gx;
            r[side](ed.x, ed.y) -= ge * 0.5 * gy;
            r[side](ed.y, ed.x) += ge * 0.5 * gx;
            r[side](ed.y, ed.y) += ge * 0.5 * gy;
          }
        }
        for (int a = 0; a < 2; ++a) {
          if (!active[a]) continue;
          for (int b = 0; b < 2; ++b) {
            if (!active[b]) continue;
            const Matrix block = 2.0 * K * r[a].transpose() * st.pinv * r[b];
            if (a == b)
              diag[static_cast<size_t>(k - 2 + a)] += block;
            else if (a == 0)
              off[static_cast<size_t>(k - 2)] += block;  // H(k−1, k)
          }
        }
      }
      // Reduce to chart coordinates and regularize slightly. Multiplicative
      // coordinates add the curvature of the exponential, (∂J/∂μ(x) −
      // ∂J/∂μ(top))·μ(x), kept only where it is positive.
      std::vector<NodeChart> chart;
      for (int k = 1; k < K; ++k) chart.push_back(node_chart(mu[static_cast<size_t>(k)]));
      std::vector<Matrix> rd(diag.size()), ro(off.size());
      std::vector<Vector> rg(grad.size());
      double scale = 0.0;
      for (size_t k = 0; k < diag.size(); ++k) {
        const Matrix& u = chart[k].basis;
        rd[k] = u.transpose() * diag[k] * u;
        rd[k] = 0.5 * (rd[k] + rd[k].transpose());
        const Vector gk = u.transpose() * grad[k];
        const int nl = static_cast<int>(chart[k].linear.size());
        for (Eigen::Index i = nl; i < gk.size(); ++i) rd[k](i, i) += std::max(gk(i), 0.0);
        rg[k] = -gk;
        if (rd[k].size() > 0) scale = std::max(scale, rd[k].diagonal().cwiseAbs().maxCoeff());
      }
      for (size_t k = 0; k < off.size(); ++k)
        ro[k] = chart[k].basis.transpose() * off[k] * chart[k + 1].basis;
      for (Matrix& b : rd) b.diagonal().array() += 1e-14 * scale;
      const std::vector<Vector> dz = solve_block_tridiagonal(rd, ro, rg);

      double decrement = 0.0;
      for (size_t k = 0; k < dz.size(); ++k) decrement += rg[k].dot(dz[k]);
      res.decrement = decrement;
      if (decrement <= options.tolerance * (1.0 + j)) {
        converged = true;
        break;
      }
      // Fraction-to-boundary step on the linear coordinates, then
      // backtracking on the objective.
      double alpha = 1.0;
      for (size_t k = 0; k < dz.size(); ++k) {
        const Measure& node = mu[k + 1];
        const Vector dmu = chart[k].basis * dz[k];
        for (int x : chart[k].linear)
          if (dmu(x) < 0.0) alpha = std::min(alpha, 0.95 * node(x) / -dmu(x));
        if (dmu(chart[k].top) < 0.0)
          alpha = std::min(alpha, 0.5 * node(chart[k].top) / -dmu(chart[k].top));
      }
      bool accepted = false;
      for (int ls = 0; ls < 60; ++ls, alpha *= 0.5) {
        std::vector<Measure> trial = mu;
        bool inside = true;
        for (size_t k = 0; k < dz.size(); ++k) {
          trial[k + 1] = chart_step(chart[k], mu[k + 1], dz[k], alpha);
          inside = inside && trial[k + 1].minCoeff() >= 0.0;
        }
        if (!inside) continue;
        const double jt = path_objective(et, trial);
        if (jt <= j - 1e-4 * alpha * decrement || (jt <= j && ls > 30)) {
          mu = std::move(trial);
          j = jt;
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        // No further decrease is representable: accept as converged if the
        // decrement is already at rounding level.
        converged = decrement <= 1e-9 * (1.0 + j);
        break;
      }
    }
    if (!converged)
      throw numerical_failure("primal_w2: Newton did not converge (decrement " +
                              std::to_string(res.decrement) + " after " +
                              std::to_string(res.iterations) + " iterations)");
  }
  res.path = assemble_path(et, mu, n);
  res.value = std::sqrt(std::max(res.path.action, 0.0));
  res.continuity_residual = continuity_residual(res.path);
  return res;
}

SimplexMaximum maximize_on_simplex(const MarkovTriple& triple, const Vector& linear,
                                   const Vector& edge_weights) {
  require_same_size(triple, linear, "linear term");
  const EdgeTable et(triple);
  if (edge_weights.size() != et.size())
    throw contract_error("maximize_on_simplex: one weight per edge expected");
  if (edge_weights.size() > 0 && edge_weights.minCoeff() < 0.0)
    throw contract_error("maximize_on_simplex: edge weights must be nonnegative");
  const int n = triple.size();
  SimplexMaximum out;

  auto value = [&](const Measure& mu) {
    double f = linear.dot(mu);
    for (int e = 0; e < et.size(); ++e)
      if (edge_weights(e) != 0.0) f += edge_weights(e) * et.mobility(mu, e);
    return f;
  };
  auto gradient_of = [&](const Measure& mu) {
    Vector g = linear;
    for (int e = 0; e < et.size(); ++e) {
      if (edge_weights(e) == 0.0) continue;
      double gx, gy;
      et.mobility_gradient(mu, e, gx, gy);
      g(et.edges[static_cast<size_t>(e)].x) += edge_weights(e) * gx;
      g(et.edges[static_cast<size_t>(e)].y) += edge_weights(e) * gy;
    }
    return g;
  };

  double scale = 1.0;
  scale = std::max(scale, linear.cwiseAbs().maxCoeff());
  for (int e = 0; e < et.size(); ++e)
    scale = std::max(scale, edge_weights(e) * (et.qxy[static_cast<size_t>(e)] + et.qyx[static_cast<size_t>(e)]));

  Measure mu = Vector::Constant(n, 1.0 / n);
  if (n == 1) {
    out.argmax = mu;
    out.value = out.upper_bound = value(mu);
    return out;
  }
  // Log-barrier path: maximize f + τ Σ log μ for decreasing τ.
  for (double tau = 1e-2 * scale; tau >= 1e-16 * scale; tau *= 0.1) {
    auto barrier = [&](const Measure& m) { return value(m) + tau * m.array().log().sum(); };
    double fb = barrier(mu);
    for (int it = 0; it < 100; ++it) {
      ++out.iterations;
      const Vector g = gradient_of(mu) + tau * mu.cwiseInverse();
      Matrix h = Matrix::Zero(n, n);  // −∇² of the barrier objective (positive definite)
      for (int e = 0; e < et.size(); ++e) {
        if (edge_weights(e) == 0.0) continue;
        const Edge& ed = et.edges[static_cast<size_t>(e)];
        double hxx, hxy, hyy;
        et.mobility_hessian(mu, e, hxx, hxy, hyy);
        h(ed.x, ed.x) -= edge_weights(e) * hxx;
        h(ed.x, ed.y) -= edge_weights(e) * hxy;
        h(ed.y, ed.x) -= edge_weights(e) * hxy;
        h(ed.y, ed.y) -= edge_weights(e) * hyy;
      }
      h.diagonal() += tau * mu.cwiseInverse().cwiseAbs2();
      Matrix kkt = Matrix::Zero(n + 1, n + 1);
      kkt.topLeftCorner(n, n) = h;
      kkt.block(0, n, n, 1).setOnes();
      kkt.block(n, 0, 1, n).setOnes();
      Vector rhs = Vector::Zero(n + 1);
      rhs.head(n) = g;
      const Vector sol = kkt.fullPivLu().solve(rhs);
      const Vector step = sol.head(n);
      const double dec = g.dot(step);
      if (!(dec > 1e-30 * scale)) break;
      double alpha = 1.0;
      for (int x = 0; x < n; ++x)
        if (step(x) < 0.0) alpha = std::min(alpha, 0.99 * mu(x) / -step(x));
      // Inside the quadratic-convergence region the change of the objective
      // drops below rounding, so full steps are taken without a value test.
      const bool local = dec < 1e-12 * scale;
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls, alpha *= 0.5) {
        const Measure trial = mu + alpha * step;
        if (trial.minCoeff() <= 0.0) continue;
        const double ft = barrier(trial);
        if (local || ft >= fb + 1e-4 * alpha * dec) {
          mu = trial / trial.sum();
          fb = barrier(mu);
          moved = true;
          break;
        }
      }
      if (!moved || dec < 1e-30 * scale) break;
    }
  }
  out.argmax = mu;
  out.value = value(mu);
  const Vector g = gradient_of(mu);
  const double gap = std::max(g.maxCoeff() - g.dot(mu), 0.0);
  out.upper_bound = out.value + gap;
  return out;
}

SimplexMaximum hj_max_violation(const MarkovTriple& triple, const VertexFunction& phidot,
                                const VertexFunction& phi) {
  require_same_size(triple, phidot, "phidot");
  require_same_size(triple, phi, "phi");
  const EdgeTable et(triple);
  const Vector diff = et.edge_difference(phi);
  return maximize_on_simplex(triple, phidot, 0.5 * diff.cwiseAbs2());
}

namespace {

// Node constraint k (between steps k and k+1, 0-based potentials).
SimplexMaximum node_maximum(const MarkovTriple& triple, const EdgeTable& et,
                            const std::vector<VertexFunction>& phi, size_t k, double h) {
  const Vector a = (phi[k + 1] - phi[k]) / h;
  const Vector c = 0.25 * (et.edge_difference(phi[k]).cwiseAbs2() +
                           et.edge_difference(phi[k + 1]).cwiseAbs2());
  return maximize_on_simplex(triple, a, c);
}

}  // namespace

HJWitness certify_witness(const MarkovTriple& triple, const Measure& mu0, const Measure& mu1,
                          std::vector<VertexFunction> phi, double horizon) {
  check_measure(triple, mu0, "mu0");
  check_measure(triple, mu1, "mu1");
  if (phi.empty()) throw contract_error("certify_witness: no potentials");
  if (!(horizon > 0.0)) throw contract_error("certify_witness: horizon must be > 0");
  for (const VertexFunction& p : phi) require_same_size(triple, p, "witness potential");
  const EdgeTable et(triple);
  HJWitness w;
  w.K = static_cast<int>(phi.size());
  w.horizon = horizon;
  const double h = horizon / w.K;
  // Shift each later potential by the certified violation of the node before
  // it; constant shifts move the node constraint by exactly that amount.
  double shift = 0.0;
  for (size_t k = 0; k + 1 < phi.size(); ++k) {
    phi[k] = phi[k].array() - shift;
    const SimplexMaximum mx = node_maximum(triple, et, {phi[k], phi[k + 1].array() - shift}, 0, h);
    shift += h * mx.upper_bound;
  }
  phi.back() = phi.back().array() - shift;
  w.objective = phi.back().dot(mu1) - phi.front().dot(mu0) -
                0.25 * h * (gamma(triple, mu0, phi.front()) + gamma(triple, mu1, phi.back()));
  w.phi = std::move(phi);
  w.max_violation = witness_violation(triple, w);
  return w;
}

double witness_violation(const MarkovTriple& triple, const HJWitness& witness) {
  const EdgeTable et(triple);
  const double h = witness.horizon / witness.K;
  double worst = 0.0;
  for (size_t k = 0; k + 1 < witness.phi.size(); ++k)
    worst = std::max(worst, node_maximum(triple, et, witness.phi, k, h).upper_bound);
  return worst;
}

DualResult dual_w2_lower(const MarkovTriple& triple, const Measure& mu0, const Measure& mu1,
                         int K, const TransportOptions& options) {
  const PrimalResult primal = primal_w2(triple, mu0, mu1, K, options);
  const EdgeTable et(triple);
  // Step potentials of the primal optimum: φ^k = K·L⁺(μ^k − μ^{k−1}) with
  // the sign fixed by V = m∘∇φ.
  std::vector<VertexFunction> phi;
  for (int k = 1; k <= K; ++k) {
    const Step st = evaluate_step(et, primal.path.mu[static_cast<size_t>(k - 1)],
                                  primal.path.mu[static_cast<size_t>(k)]);
    phi.push_back(K * st.psi);
  }
  DualResult out;
  out.witness = certify_witness(triple, mu0, mu1, std::move(phi));
  out.rounds = 1;
  if (out.witness.max_violation > options.feasibility_tolerance)
    throw numerical_failure("dual_w2_lower: witness violation " +
                            std::to_string(out.witness.max_violation) + " exceeds tolerance");
  out.value = std::sqrt(std::max(2.0 * out.witness.objective, 0.0));
  return out;
}

GeodesicResult geodesic(const MarkovTriple& triple, const Measure& mu0, const Measure& mu1, int K,
                        const TransportOptions& options) {
  check_measure(triple, mu0, "mu0");
  check_measure(triple, mu1, "mu1");
  GeodesicResult out;
  const Measure a = mix_if_needed(triple, mu0, options.mixing, out.mixed);
  const Measure b = mix_if_needed(triple, mu1, options.mixing, out.mixed);
  const PrimalResult primal = primal_w2(triple, a, b, K, options);
  out.value = primal.value;
  const EdgeTable et(triple);
  const int n = triple.size();
  if (primal.path.action <= 0.0) {
    out.path = primal.path;
    return out;
  }
  // Arc length of each step is √(d·L⁺d); resample nodes at equal arc length
  // along the polygon of node measures.
  std::vector<double> arc(static_cast<size_t>(K + 1), 0.0);
  for (int k = 1; k <= K; ++k) {
    const Step st = evaluate_step(et, primal.path.mu[static_cast<size_t>(k - 1)],
                                  primal.path.mu[static_cast<size_t>(k)]);
    arc[static_cast<size_t>(k)] = arc[static_cast<size_t>(k - 1)] + std::sqrt(std::max(st.cost, 0.0));
  }
  std::vector<Measure> mu(static_cast<size_t>(K + 1));
  mu.front() = a;
  mu.back() = b;
  size_t seg = 1;
  for (int j = 1; j < K; ++j) {
    const double target = arc.back() * j / K;
    while (seg < static_cast<size_t>(K) && arc[seg] < target) ++seg;
    const double span = arc[seg] - arc[seg - 1];
    const double lam = span > 0.0 ? (target - arc[seg - 1]) / span : 0.0;
    mu[static_cast<size_t>(j)] =
        (1.0 - lam) * primal.path.mu[seg - 1] + lam * primal.path.mu[seg];
  }
  out.path = assemble_path(et, mu, n);
  for (int k = 1; k <= K; ++k) {
    const Step st = evaluate_step(et, mu[static_cast<size_t>(k - 1)], mu[static_cast<size_t>(k)]);
    out.speed_deviation =
        std::max(out.speed_deviation, std::abs(K * K * st.cost / out.path.action - 1.0));
  }
  return out;
}

MetricTensorSolve metric_tensor(const MarkovTriple& triple, const Measure& mu, const Vector& s,
                                const TransportOptions& options) {
  require_same_size(triple, mu, "mu");
  require_same_size(triple, s, "s");
  if (mu.minCoeff() < 0.0) throw contract_error("metric_tensor: mu has negative masses");
  if (std::abs(s.sum()) > 1e-10 * (1.0 + s.cwiseAbs().maxCoeff()))
    throw contract_error("metric_tensor: s must sum to zero");
  MetricTensorSolve out;
  out.mu = mix_if_needed(triple, mu, options.mixing, out.mixed);
  out.s = s;
  const int n = triple.size();
  const Matrix l = gamma_form(triple, out.mu);
  out.psi = Vector::Zero(n);
  if (n > 1) {
    // Pin the last state and solve the reduced positive definite system.
    const Eigen::LLT<Matrix> llt(l.topLeftCorner(n - 1, n - 1));
    if (llt.info() != Eigen::Success)
      throw std::domain_error("metric_tensor: weighted Laplacian is singular beyond constants");
    out.psi.head(n - 1) = llt.solve(s.head(n - 1));
    out.psi.array() -= out.psi.mean();
  }
  out.residual = (l * out.psi - s).cwiseAbs().maxCoeff();
  out.value = s.dot(out.psi);
  return out;
}

}  // namespace srf
