#include "doctest.h"

#include "srf/curvature.hpp"
#include "srf/errors.hpp"
#include "srf/heatflow.hpp"
#include "support.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

using namespace srf;
using srf::testing::random_probability;
using srf::testing::random_triple;
using srf::testing::random_vector;
using srf::testing::two_point;

namespace {

// Same chain with states listed in the order perm[0], perm[1], ...
MarkovTriple permuted(const MarkovTriple& t, const std::vector<int>& perm) {
  const int n = t.size();
  Matrix q(n, n);
  Vector pi(n);
  std::vector<std::string> names;
  for (int i = 0; i < n; ++i) {
    names.push_back(t.states()[static_cast<size_t>(perm[static_cast<size_t>(i)])]);
    pi(i) = t.pi()(perm[static_cast<size_t>(i)]);
    for (int j = 0; j < n; ++j) q(i, j) = t.rate(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
  }
  return MarkovTriple(names, q, pi);
}

// Small budgets for verdict tests; the acceptance suite runs the full ones.
VerifyOptions quick_options() {
  VerifyOptions o;
  o.threads = 1;
  o.bochner_times = 12;
  o.bochner_starts = 8;
  o.pair_starts = 3;
  o.gradient_samples = 16;
  o.poincare_samples = 16;
  o.transport_samples = 6;
  o.transport_K = 32;
  o.convexity_times = 2;
  o.convexity_pairs = 1;
  o.convexity_K = 32;
  return o;
}

}  // namespace

TEST_CASE("static two-point chain has Bochner gap 2p at the invariant measure") {
  for (double p : {0.5, 1.0, 3.0}) {
    const MarkovTriple t = two_point(p);
    const BochnerGap g = bochner_gap(t, std::nullopt, t.pi());
    CHECK(g.value == doctest::Approx(2.0 * p).epsilon(1e-10));
    CHECK(std::abs(g.psi.sum()) < 1e-12);
    CHECK(g.psi.dot(gamma_form(t, t.pi()) * g.psi) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(static_ricci_bound(t) == doctest::Approx(2.0 * p).epsilon(1e-6));
  }
}

TEST_CASE("Bochner gap is the minimum of the Rayleigh quotient") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const MarkovTriple t = random_triple(rng, 4);
    const Measure mu = random_probability(rng, 4, 0.05);
    const BochnerGap g = bochner_gap(t, std::nullopt, mu);
    for (int k = 0; k < 50; ++k) {
      const VertexFunction psi = random_vector(rng, 4);
      const double num = gamma2(t, mu, psi);
      const double den = gamma(t, mu, psi);
      if (den > 1e-12) CHECK(num / den >= g.value - 1e-9 * (1.0 + std::abs(g.value)));
    }
    CHECK(gamma2(t, mu, g.psi) / gamma(t, mu, g.psi) ==
          doctest::Approx(g.value).epsilon(1e-8));
  }
}

TEST_CASE("Bochner gap is invariant under constant shifts and relabeling") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const MarkovTriple t = random_triple(rng, 5);
    const Measure mu = random_probability(rng, 5, 0.05);
    const BochnerGap g = bochner_gap(t, std::nullopt, mu);
    const VertexFunction shifted = g.psi + Vector::Constant(5, 3.7);
    CHECK(gamma2(t, mu, shifted) / gamma(t, mu, shifted) ==
          doctest::Approx(g.value).epsilon(1e-8));

    const std::vector<int> perm = {3, 0, 4, 1, 2};
    Measure pmu(5);
    for (int i = 0; i < 5; ++i) pmu(i) = mu(perm[static_cast<size_t>(i)]);
    const BochnerGap pg = bochner_gap(permuted(t, perm), std::nullopt, pmu);
    CHECK(pg.value == doctest::Approx(g.value).epsilon(1e-9));
  }
}

TEST_CASE("static Ricci bound scales linearly with the rates") {
  std::mt19937_64 rng(8);
  const MarkovTriple t = random_triple(rng, 4);
  const double k1 = static_ricci_bound(t, 16, 3);
  for (double lambda : {0.25, 4.0}) {
    const double kl = static_ricci_bound(t.scaled(lambda), 16, 3);
    CHECK(kl == doctest::Approx(lambda * k1).epsilon(1e-6));
  }
}

TEST_CASE("product of triples is at least as curved as its weaker factor") {
  const MarkovTriple a = two_point(1.0);
  const MarkovTriple b = two_point(3.0);
  const double kp = static_ricci_bound(product_triple(a, b), 16, 2);
  CHECK(kp >= std::min(static_ricci_bound(a), static_ricci_bound(b)) - 1e-6);
}

TEST_CASE("Bochner gap contracts") {
  const MarkovTriple t = two_point(1.0);
  Measure corner(2);
  corner << 1.0, 0.0;
  CHECK_THROWS_AS(bochner_gap(t, std::nullopt, corner), std::domain_error);
  CHECK_THROWS_AS(bochner_gap(t, std::nullopt, Measure::Constant(3, 1.0 / 3.0)), contract_error);

  const SingularFlow flow = builtin_scenario("collapse_product");
  const double t1 = flow.transition(1).time;
  const int n = eval_at(flow, 0.25).triple.size();
  CHECK_THROWS_AS(bochner_gap(flow, t1, Measure::Constant(n, 1.0 / n)), contract_error);
}

TEST_CASE("two-point soliton sits exactly on the Bochner bound") {
  const SingularFlow flow = builtin_scenario("two_point_soliton");
  for (double t : {0.05, 0.15, 0.24}) {
    const Measure pi = eval_at(flow, t).triple.pi();
    CHECK(std::abs(bochner_gap(flow, t, pi).value) < 1e-9);
  }
  const VerificationReport r = check_bochner(flow, quick_options());
  CHECK(r.verdict == Verdict::pass);
  CHECK(std::abs(r.margin) <= 1e-6);
}

TEST_CASE("super-critical two-point flow violates every criterion with a reproducible witness") {
  // Default budgets: the reduced ones are too coarse for the transport and
  // convexity estimators to resolve this violation.
  const SingularFlow flow = builtin_scenario("supercritical_two_point");
  VerifyOptions o;
  o.threads = 1;
  for (auto check : {check_bochner, check_gradient_estimate, check_transport_estimate,
                     check_dynamic_convexity, check_reverse_poincare}) {
    const VerificationReport r = check(flow, o);
    CHECK(r.verdict == Verdict::violation);
    REQUIRE(r.witness.has_value());
    CHECK(r.margin < -r.tolerance);
    const double again = reevaluate_witness(flow, r, o);
    CHECK(again == doctest::Approx(r.margin).epsilon(1e-6).scale(r.tolerance));
  }
}

TEST_CASE("verdicts on builtin super Ricci flows") {
  const VerifyOptions o = quick_options();
  for (const char* name : {"static", "two_point_soliton", "collapse_product"}) {
    CAPTURE(name);
    const VerificationReport agg = verify_srf(builtin_scenario(name), o);
    CHECK(agg.verdict == Verdict::pass);
    CHECK(agg.consistent);
    CHECK(agg.parts.size() == 5);
    for (const VerificationReport& part : agg.parts) {
      CAPTURE(to_string(part.criterion));
      CHECK(part.verdict == Verdict::pass);
      CHECK(part.inconclusive_samples == 0);
    }
  }
}

TEST_CASE("single-threaded checks are bit-exact and thread count does not change verdicts") {
  const SingularFlow flow = builtin_scenario("collapse_product");
  VerifyOptions o = quick_options();
  const VerificationReport a = check_gradient_estimate(flow, o);
  const VerificationReport b = check_gradient_estimate(flow, o);
  CHECK(a.margin == b.margin);
  REQUIRE(a.witness.has_value());
  CHECK(a.witness->times == b.witness->times);
  o.threads = 3;
  const VerificationReport c = check_gradient_estimate(flow, o);
  CHECK(c.verdict == a.verdict);
  CHECK(c.margin == doctest::Approx(a.margin).scale(1e-8));
}

TEST_CASE("report labels") {
  CHECK(std::string(to_string(Criterion::bochner)) == "bochner");
  CHECK(std::string(to_string(Verdict::violation)) == "violation");
  CHECK(worker_count(2) == 2);
  CHECK(worker_count(0) >= 1);
}
