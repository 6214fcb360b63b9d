#pragma once

// Shared fixtures for the unit tests: small triples and random inputs.

#include "srf/core_chain.hpp"

#include <random>
#include <string>
#include <vector>

namespace srf::testing {

inline MarkovTriple two_point(double p) {
  Matrix q(2, 2);
  q << 0.0, p, p, 0.0;
  return MarkovTriple({"a", "b"}, q, Vector::Constant(2, 0.5));
}

inline Vector random_probability(std::mt19937_64& rng, int n, double floor = 0.0) {
  std::exponential_distribution<double> e(1.0);
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = e(rng) + floor;
  return v / v.sum();
}

inline Vector random_vector(std::mt19937_64& rng, int n, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

// Random reversible irreducible chain: a path through all states plus random
// extra conductances, with Q(x,y) = c(x,y)/π(x).
inline MarkovTriple random_triple(std::mt19937_64& rng, int n,
                                  double extra_edge_prob = 0.5) {
  std::uniform_real_distribution<double> u(0.2, 2.0);
  std::bernoulli_distribution coin(extra_edge_prob);
  const Vector pi = random_probability(rng, n, 0.2);
  Matrix c = Matrix::Zero(n, n);
  for (int x = 0; x + 1 < n; ++x) c(x, x + 1) = c(x + 1, x) = u(rng) * 0.1;
  for (int x = 0; x < n; ++x)
    for (int y = x + 2; y < n; ++y)
      if (coin(rng)) c(x, y) = c(y, x) = u(rng) * 0.1;
  Matrix q = Matrix::Zero(n, n);
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      if (x != y) q(x, y) = c(x, y) / pi(x);
  std::vector<std::string> names;
  for (int i = 0; i < n; ++i) names.push_back("v" + std::to_string(i));
  return MarkovTriple(names, q, pi);
}

}  // namespace srf::testing
