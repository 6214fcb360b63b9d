#include "doctest.h"
#include "srf/core_chain.hpp"
#include "srf/errors.hpp"
#include "support.hpp"

#include <cmath>
#include <random>

using namespace srf;
using srf::testing::random_probability;
using srf::testing::random_triple;
using srf::testing::random_vector;
using srf::testing::two_point;

TEST_CASE("log_mean: closed values and boundary") {
  CHECK(log_mean(1.0, 1.0) == doctest::Approx(1.0));
  CHECK(log_mean(3.0, 0.0) == 0.0);
  CHECK(log_mean(0.0, 3.0) == 0.0);
  CHECK(log_mean(0.0, 0.0) == 0.0);
  const double e2 = std::exp(2.0);
  CHECK(log_mean(1.0, e2) == doctest::Approx((e2 - 1.0) / 2.0).epsilon(1e-14));
  CHECK_THROWS_AS(log_mean(-1.0, 2.0), std::domain_error);
}

TEST_CASE("log_mean: agrees with the defining integral near and off the diagonal") {
  // ∫₀¹ s^a t^{1-a} da by composite Simpson on a fine grid.
  auto quad = [](double s, double t) {
    const int n = 2000;
    double sum = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double a = static_cast<double>(i) / n;
      const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      sum += w * std::pow(s, a) * std::pow(t, 1.0 - a);
    }
    return sum / (3.0 * n);
  };
  for (double s : {1e-3, 0.5, 0.999999, 1.0 + 1e-9, 1.3, 2.7, 9.0}) {
    CHECK(log_mean(s, 1.0) == doctest::Approx(quad(s, 1.0)).epsilon(1e-11));
  }
}

TEST_CASE("log_mean: mean bounds, symmetry, homogeneity on 10^4 pairs") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-6.0, 6.0);
  for (int i = 0; i < 10000; ++i) {
    const double s = std::exp(u(rng));
    const double t = std::exp(u(rng));
    const double l = log_mean(s, t);
    CHECK(l >= std::sqrt(s * t) * (1.0 - 1e-13));
    CHECK(l <= 0.5 * (s + t) * (1.0 + 1e-13));
    CHECK(l == doctest::Approx(log_mean(t, s)).epsilon(1e-13));
    CHECK(log_mean(3.7 * s, 3.7 * t) == doctest::Approx(3.7 * l).epsilon(1e-13));
  }
}

TEST_CASE("log_mean: midpoint concavity") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.01, 10.0);
  for (int i = 0; i < 10000; ++i) {
    const double s1 = u(rng), t1 = u(rng), s2 = u(rng), t2 = u(rng);
    const double mid = log_mean(0.5 * (s1 + s2), 0.5 * (t1 + t2));
    CHECK(mid >= 0.5 * (log_mean(s1, t1) + log_mean(s2, t2)) - 1e-12);
  }
}

TEST_CASE("log_mean: discrete chain rule for the logarithm") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  for (int i = 0; i < 10000; ++i) {
    const double a = std::exp(u(rng));
    const double b = std::exp(u(rng));
    CHECK(log_mean(a, b) * (std::log(b) - std::log(a)) ==
          doctest::Approx(b - a).epsilon(1e-12).scale(1.0));
  }
}

TEST_CASE("log_mean_partials: diagonal, Euler relation, finite differences") {
  auto p = log_mean_partials(2.0, 2.0);
  CHECK(p.d1 == doctest::Approx(0.5));
  CHECK(p.d2 == doctest::Approx(0.5));

  p = log_mean_partials(1.0, 4.0);
  CHECK(1.0 * p.d1 + 4.0 * p.d2 == doctest::Approx(log_mean(1.0, 4.0)).epsilon(1e-14));

  const double h = 1e-5;
  p = log_mean_partials(2.0, 5.0);
  const double fd1 = (log_mean(2.0 + h, 5.0) - log_mean(2.0 - h, 5.0)) / (2 * h);
  const double fd2 = (log_mean(2.0, 5.0 + h) - log_mean(2.0, 5.0 - h)) / (2 * h);
  CHECK(std::abs(p.d1 - fd1) < 1e-7);
  CHECK(std::abs(p.d2 - fd2) < 1e-7);

  CHECK_THROWS_AS(log_mean_partials(0.0, 1.0), std::domain_error);

  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(-8.0, 8.0);
  for (int i = 0; i < 10000; ++i) {
    const double s = std::exp(u(rng));
    const double t = std::exp(u(rng));
    const auto q = log_mean_partials(s, t);
    CHECK(q.d1 > 0.0);
    CHECK(q.d2 > 0.0);
    // Bounded by 1 only while the ratio is moderate; ∂₁Λ(s,t) → ∞ as s → 0.
    if (std::abs(std::log(s / t)) <= 1.5) {
      CHECK(q.d1 < 1.0);
      CHECK(q.d2 < 1.0);
    }
    CHECK(s * q.d1 + t * q.d2 == doctest::Approx(log_mean(s, t)).epsilon(1e-12));
  }
}

TEST_CASE("log_mean_hessian: finite differences and homogeneity") {
  for (auto [s, t] : {std::pair{2.0, 5.0}, std::pair{1.0, 1.0 + 1e-7},
                      std::pair{0.01, 3.0}, std::pair{7.0, 0.2}}) {
    const auto hs = log_mean_hessian(s, t);
    const double h = 1e-5 * std::min(s, t);
    const auto ps = log_mean_partials(s + h, t);
    const auto ms = log_mean_partials(s - h, t);
    const auto pt = log_mean_partials(s, t + h);
    const auto mt = log_mean_partials(s, t - h);
    CHECK(hs.d11 == doctest::Approx((ps.d1 - ms.d1) / (2 * h)).epsilon(1e-6));
    CHECK(hs.d12 == doctest::Approx((pt.d1 - mt.d1) / (2 * h)).epsilon(1e-6));
    CHECK(hs.d12 == doctest::Approx((ps.d2 - ms.d2) / (2 * h)).epsilon(1e-6));
    CHECK(hs.d22 == doctest::Approx((pt.d2 - mt.d2) / (2 * h)).epsilon(1e-6));
    // Partials are 0-homogeneous, so the Hessian annihilates (s,t).
    CHECK(std::abs(hs.d11 * s + hs.d12 * t) < 1e-12 * std::abs(hs.d11 * s) + 1e-15);
    CHECK(std::abs(hs.d12 * s + hs.d22 * t) < 1e-12 * std::abs(hs.d22 * t) + 1e-15);
    CHECK(hs.d11 <= 0.0);
  }
}

TEST_CASE("MarkovTriple: validation") {
  Matrix q(2, 2);
  q << 0.0, 1.0, 2.0, 0.0;
  CHECK_THROWS_AS(MarkovTriple({"a", "b"}, q, Vector::Constant(2, 0.5)), validation_error);
  Vector pi(2);
  pi << 2.0 / 3.0, 1.0 / 3.0;
  MarkovTriple ok({"a", "b"}, q, pi);
  CHECK(ok.rates().row(0).sum() == 0.0);
  CHECK(ok.rates().row(1).sum() == 0.0);
  CHECK(ok.rate(0, 0) == -1.0);

  Matrix disc = Matrix::Zero(3, 3);
  disc(0, 1) = disc(1, 0) = 1.0;
  CHECK_THROWS_AS(MarkovTriple({"a", "b", "c"}, disc, Vector::Constant(3, 1.0 / 3)),
                  validation_error);
  CHECK_THROWS_AS(MarkovTriple({"a", "b"}, q, Vector::Constant(3, 1.0 / 3)), contract_error);
  Matrix neg = q;
  neg(0, 1) = -1.0;
  CHECK_THROWS_AS(MarkovTriple({"a", "b"}, neg, pi), validation_error);
  CHECK_THROWS_AS(MarkovTriple({"a", "b"}, q, Vector::Constant(2, 0.4)), validation_error);

  MarkovTriple single({"z"}, Matrix::Zero(1, 1), Vector::Constant(1, 1.0));
  CHECK(single.size() == 1);
  CHECK(single.edges().empty());
}

TEST_CASE("lambda_weights") {
  const auto tp = two_point(1.0);
  const EdgeField w = lambda_weights(tp, Vector::Constant(2, 0.5));
  CHECK(w(0, 1) == doctest::Approx(0.5));
  CHECK(w(1, 0) == doctest::Approx(0.5));

  std::mt19937_64 rng(21);
  const auto tr = random_triple(rng, 5);
  CHECK(lambda_weights(tr, Vector::Zero(5)).isZero());
  const Vector mu = random_probability(rng, 5);
  const EdgeField a = lambda_weights(tr, mu);
  const EdgeField b = lambda_weights(tr.scaled(2.5), mu);
  CHECK((b - 2.5 * a).cwiseAbs().maxCoeff() < 1e-13);
  CHECK((a - a.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(lambda_weights(tr, Vector::Zero(4)), contract_error);
}

TEST_CASE("laplacian and adjoint_laplacian") {
  const auto tp = two_point(1.0);
  Vector psi(2);
  psi << 0.0, 1.0;
  const Vector lap = laplacian(tp, psi);
  CHECK(lap(0) == doctest::Approx(1.0));
  CHECK(lap(1) == doctest::Approx(-1.0));
  Vector delta(2);
  delta << 1.0, 0.0;
  const Vector adj = adjoint_laplacian(tp, delta);
  CHECK(adj(0) == doctest::Approx(-1.0));
  CHECK(adj(1) == doctest::Approx(1.0));

  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const auto tr = random_triple(rng, 2 + trial % 7);
    const int n = tr.size();
    const Vector c = Vector::Constant(n, 3.1);
    CHECK(laplacian(tr, c).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(adjoint_laplacian(tr, tr.pi()).cwiseAbs().maxCoeff() < 1e-12);
    const Vector f = random_vector(rng, n);
    const Vector g = random_vector(rng, n);
    CHECK(pi_inner(tr, f, laplacian(tr, g)) ==
          doctest::Approx(pi_inner(tr, laplacian(tr, f), g)).epsilon(1e-10));
    // Integration by parts: ⟨∇f,∇g⟩_π = -⟨Δf, g⟩_π with ⟨Φ,Ψ⟩_π = ½ΣΦΨQπ.
    double lhs = 0.0;
    for (int x = 0; x < n; ++x)
      for (int y = 0; y < n; ++y)
        if (x != y) lhs += 0.5 * (f(y) - f(x)) * (g(y) - g(x)) * tr.rate(x, y) * tr.pi()(x);
    CHECK(lhs == doctest::Approx(-pi_inner(tr, laplacian(tr, f), g)).epsilon(1e-10));
    const Vector sigma = random_vector(rng, n);
    CHECK(std::abs(adjoint_laplacian(tr, sigma).sum()) < 1e-12);
    // Δ̂(ρπ) = (Δρ)π.
    const Vector rho = random_vector(rng, n);
    const Vector lhs2 = adjoint_laplacian(tr, rho.cwiseProduct(tr.pi()));
    const Vector rhs2 = laplacian(tr, rho).cwiseProduct(tr.pi());
    CHECK((lhs2 - rhs2).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("gamma") {
  const auto tp = two_point(1.0);
  Vector psi(2);
  psi << 0.0, 1.0;
  const Vector mu = Vector::Constant(2, 0.5);
  CHECK(gamma(tp, mu, psi) == doctest::Approx(0.5));
  CHECK(gamma(tp, mu, Vector::Constant(2, 4.0)) == 0.0);
  CHECK(gamma(tp, mu, psi + Vector::Constant(2, 7.0)) == doctest::Approx(0.5));

  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const auto tr = random_triple(rng, 3 + trial % 5);
    const int n = tr.size();
    const Vector m = random_probability(rng, n);
    const Vector f = random_vector(rng, n);
    const double g = gamma(tr, m, f);
    CHECK(g >= 0.0);
    CHECK(g == doctest::Approx(f.dot(gamma_form(tr, m) * f)).epsilon(1e-10));
    CHECK(g == doctest::Approx(gamma(tr, m, f + Vector::Constant(n, -2.0))).epsilon(1e-10));
  }
}

TEST_CASE("gamma2: two-point chain has optimal bound 2p attained at pi") {
  for (double p : {0.5, 1.0, 3.0}) {
    const auto tp = two_point(p);
    Vector psi(2);
    psi << 0.0, 1.0;
    const Vector pi = Vector::Constant(2, 0.5);
    CHECK(gamma2(tp, pi, psi) / gamma(tp, pi, psi) == doctest::Approx(2.0 * p).epsilon(1e-12));
    for (int i = 1; i < 200; ++i) {
      Vector mu(2);
      mu << i / 200.0, 1.0 - i / 200.0;
      CHECK(gamma2(tp, mu, psi) / gamma(tp, mu, psi) >= 2.0 * p * (1.0 - 1e-12));
    }
  }
}

TEST_CASE("gamma2: constants, shift invariance and assembled form") {
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 100; ++trial) {
    const auto tr = random_triple(rng, 2 + trial % 7);
    const int n = tr.size();
    const Vector mu = random_probability(rng, n, 0.05);
    const Vector f = random_vector(rng, n);
    CHECK(std::abs(gamma2(tr, mu, Vector::Constant(n, 1.5))) < 1e-14);
    const double g2 = gamma2(tr, mu, f);
    CHECK(g2 == doctest::Approx(gamma2(tr, mu, f + Vector::Constant(n, 0.7))).epsilon(1e-9));
    const Matrix a = gamma2_form(tr, mu);
    CHECK((a - a.transpose()).cwiseAbs().maxCoeff() < 1e-14 * (1.0 + a.cwiseAbs().maxCoeff()));
    CHECK((a * Vector::Ones(n)).cwiseAbs().maxCoeff() < 1e-10 * (1.0 + a.cwiseAbs().maxCoeff()));
    CHECK(g2 == doctest::Approx(f.dot(a * f)).epsilon(1e-9).scale(1e-3));
  }
}

TEST_CASE("gamma2: alternate edge formula via the adjoint Laplacian") {
  // Δ̂Λ(x,y) = ∂₁Λ(μxQxy, μyQyx)(Δ̂μ)(x)Q(x,y) + ∂₂Λ(...)(Δ̂μ)(y)Q(y,x).
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 50; ++trial) {
    const auto tr = random_triple(rng, 4);
    const Vector mu = random_probability(rng, 4, 0.05);
    const Vector f = random_vector(rng, 4);
    const Vector adj = adjoint_laplacian(tr, mu);
    const Vector lf = laplacian(tr, f);
    double value = 0.0;
    for (const Edge& e : tr.edges()) {
      const double s = mu(e.x) * tr.rate(e.x, e.y);
      const double t = mu(e.y) * tr.rate(e.y, e.x);
      const auto p = log_mean_partials(s, t);
      const double dl = p.d1 * adj(e.x) * tr.rate(e.x, e.y) + p.d2 * adj(e.y) * tr.rate(e.y, e.x);
      const double d = f(e.y) - f(e.x);
      value += 0.5 * d * d * dl - d * (lf(e.y) - lf(e.x)) * log_mean(s, t);
    }
    CHECK(gamma2(tr, mu, f) == doctest::Approx(value).epsilon(1e-10).scale(1e-3));
  }
}

TEST_CASE("gamma2: dissipation of gamma along the static heat flow") {
  // d/dh Γ(μ - hΔ̂μ, ψ + hΔψ) at h = 0 equals -2Γ₂(μ,ψ).
  std::mt19937_64 rng(26);
  for (int trial = 0; trial < 50; ++trial) {
    const auto tr = random_triple(rng, 3 + trial % 4);
    const int n = tr.size();
    const Vector mu = random_probability(rng, n, 0.1);
    const Vector f = random_vector(rng, n);
    const Vector dmu = -adjoint_laplacian(tr, mu);
    const Vector df = laplacian(tr, f);
    const double h = 1e-5;
    const double fd = (gamma(tr, mu + h * dmu, f + h * df) - gamma(tr, mu - h * dmu, f - h * df)) / (2 * h);
    CHECK(fd == doctest::Approx(-2.0 * gamma2(tr, mu, f)).epsilon(1e-6).scale(1e-4));
  }
}

TEST_CASE("gamma2: boundary policy") {
  const auto tp = two_point(1.0);
  Vector mu(2);
  mu << 0.0, 1.0;
  Vector psi(2);
  psi << 0.0, 1.0;
  CHECK_THROWS_AS(gamma2(tp, mu, psi), std::domain_error);
  CHECK(std::isinf(gamma2(tp, mu, psi, BoundaryPolicy::extend)));
  CHECK(gamma2(tp, mu, Vector::Constant(2, 1.0), BoundaryPolicy::extend) == 0.0);
  // Interior values are unaffected by the policy.
  Vector in(2);
  in << 0.3, 0.7;
  CHECK(gamma2(tp, in, psi, BoundaryPolicy::extend) == gamma2(tp, in, psi));
}

TEST_CASE("dt_gamma") {
  std::mt19937_64 rng(27);
  const auto tr = random_triple(rng, 5);
  const Vector mu = random_probability(rng, 5);
  const Vector f = random_vector(rng, 5);
  CHECK(dt_gamma(tr, Matrix::Zero(5, 5), mu, f) == 0.0);
  CHECK_THROWS_AS(dt_gamma(tr, Matrix(), mu, f), contract_error);

  // Q_t = L_t Q₀: ∂ₜΓ = (L̇/L)Γ.
  const double ratio = 0.37;
  Matrix qdot = ratio * tr.rates();
  CHECK(dt_gamma(tr, qdot, mu, f) == doctest::Approx(ratio * gamma(tr, mu, f)).epsilon(1e-12));

  // Two-point soliton p_t = p₀/(1-4p₀t): L̇/L = 4p_t.
  const double p0 = 1.0, t = 0.1;
  const double pt = p0 / (1.0 - 4.0 * p0 * t);
  const auto tp = two_point(pt);
  Matrix qd(2, 2);
  const double pdot = 4.0 * pt * pt;
  qd << -pdot, pdot, pdot, -pdot;
  Vector m2(2);
  m2 << 0.2, 0.8;
  Vector p2(2);
  p2 << 1.0, -2.0;
  CHECK(dt_gamma(tp, qd, m2, p2) == doctest::Approx(4.0 * pt * gamma(tp, m2, p2)).epsilon(1e-12));

  // Finite difference in the rates.
  Matrix dir = Matrix::Zero(5, 5);
  for (const Edge& e : tr.edges()) {
    // Keep detailed balance: perturb the conductance of each edge.
    const double c = 0.3 * tr.rate(e.x, e.y) * tr.pi()(e.x) * (1 + e.x);
    dir(e.x, e.y) = c / tr.pi()(e.x);
    dir(e.y, e.x) = c / tr.pi()(e.y);
  }
  const double h = 1e-6;
  Matrix off = tr.rates();
  off.diagonal().setZero();
  const MarkovTriple plus(tr.states(), off + h * dir, tr.pi());
  const MarkovTriple minus(tr.states(), off - h * dir, tr.pi());
  const double fd = (gamma(plus, mu, f) - gamma(minus, mu, f)) / (2 * h);
  CHECK(dt_gamma(tr, dir, mu, f) == doctest::Approx(fd).epsilon(1e-6));
  const Matrix c = dt_gamma_form(tr, dir, mu);
  CHECK(f.dot(c * f) == doctest::Approx(dt_gamma(tr, dir, mu, f)).epsilon(1e-12));
}

TEST_CASE("entropy") {
  const auto tp = two_point(1.0);
  CHECK(entropy(tp, tp.pi()) == doctest::Approx(0.0));
  Vector mu(2);
  mu << 1.0, 0.0;
  CHECK(entropy(tp, mu) == doctest::Approx(std::log(2.0)));
  std::mt19937_64 rng(28);
  const auto tr = random_triple(rng, 6);
  for (int i = 0; i < 1000; ++i) CHECK(entropy(tr, random_probability(rng, 6)) >= -1e-15);
}

TEST_CASE("product_triple") {
  const auto p = product_triple(two_point(1.0), two_point(1.0));
  CHECK(p.size() == 4);
  CHECK(p.states()[1] == "a|b");
  CHECK(p.pi().isApprox(Vector::Constant(4, 0.25)));
  CHECK(p.edges().size() == 4);
  CHECK(p.rate(0, 1) == 1.0);
  CHECK(p.rate(0, 2) == 1.0);
  CHECK(p.rate(0, 3) == 0.0);
  MarkovTriple single({"o"}, Matrix::Zero(1, 1), Vector::Constant(1, 1.0));
  const auto same = product_triple(two_point(2.0), single);
  CHECK(same.rates().isApprox(two_point(2.0).rates()));
}
