// Built-in example flows: static nonnegatively curved chains, shrinking and
// expanding solitons, a collapsing and an exploding product, and a toy flow
// where a triangle collapses and a vertex later spawns a neighbour.

#include "srf/errors.hpp"
#include "srf/schedule.hpp"

#include <set>

namespace srf {

namespace {

double param(const ScenarioParams& p, const std::string& key, double fallback) {
  const auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

void require_known(const ScenarioParams& p, const std::set<std::string>& allowed,
                   const std::string& name) {
  for (const auto& [k, v] : p)
    if (!allowed.count(k))
      throw contract_error("builtin '" + name + "': unknown parameter '" + k + "'");
}

void require(bool ok, const std::string& name, const std::string& what) {
  if (!ok) throw contract_error("builtin '" + name + "': " + what);
}

MarkovTriple two_point_triple(double p, const std::string& a = "a", const std::string& b = "b") {
  Matrix q(2, 2);
  q << 0.0, p, p, 0.0;
  return MarkovTriple({a, b}, q, Vector::Constant(2, 0.5));
}

IntervalSpec point_interval(double t0, double t1) {
  IntervalSpec iv;
  iv.t_start = t0;
  iv.t_end = t1;
  iv.states = {"*"};
  iv.pi = {PiSchedule::constant(1.0)};
  return iv;
}

// Soliton L_t = 1/(1 - 2κRt) applied to a two-point chain with rate p:
// p_t = p/(1 - 2κRt), collapsing to a point at T = 1/(2κR).
SingularFlow two_point_soliton_flow(const std::string& name, double p0, double kappa, double scale) {
  const double t_end = 1.0 / (2.0 * kappa * scale);
  return scaled_flow(two_point_triple(p0), RateSchedule::soliton_scaled(1.0, kappa, 0.0, scale),
                     0.0, t_end, name);
}

SingularFlow build(const std::string& name, const ScenarioParams& params) {
  if (name == "static") {
    require_known(params, {"p", "T"}, name);
    const double p = param(params, "p", 1.0);
    const double t_end = param(params, "T", 1.0);
    require(p > 0.0 && t_end > 0.0, name, "need p > 0 and T > 0");
    return static_flow(product_triple(two_point_triple(p), two_point_triple(p)), 0.0, t_end, name);
  }
  if (name == "two_point_soliton") {
    require_known(params, {"p0", "R"}, name);
    const double p0 = param(params, "p0", 1.0);
    const double r = param(params, "R", 1.0);
    require(p0 > 0.0 && r > 0.0, name, "need p0 > 0 and R > 0");
    // Optimal Ricci bound of the two-point chain: κ = 2p₀.
    return two_point_soliton_flow(name, p0, 2.0 * p0, r);
  }
  if (name == "supercritical_two_point") {
    require_known(params, {"p0"}, name);
    const double p0 = param(params, "p0", 1.0);
    require(p0 > 0.0, name, "need p0 > 0");
    // p_t = p₀/(1 - 5p₀t): faster than the optimal soliton.
    return two_point_soliton_flow(name, p0, 2.5 * p0, 1.0);
  }
  if (name == "expanding_soliton") {
    require_known(params, {"p0", "kappa", "T"}, name);
    const double p0 = param(params, "p0", 1.0);
    const double kappa = param(params, "kappa", -1.0);
    const double t_end = param(params, "T", 1.0);
    require(p0 > 0.0 && kappa <= 0.0 && t_end > 0.0, name, "need p0 > 0, kappa <= 0, T > 0");
    return scaled_flow(two_point_triple(p0), RateSchedule::soliton_scaled(1.0, kappa), 0.0, t_end, name);
  }
  if (name == "collapse_product") {
    require_known(params, {"kappa", "p", "T"}, name);
    const double kappa = param(params, "kappa", 1.0);
    const double p = param(params, "p", 1.0);
    const double t_end = param(params, "T", 1.0);
    const double t1 = 1.0 / (2.0 * kappa);
    require(kappa > 0.0 && p > 0.0 && t1 < t_end, name, "need kappa > 0, p > 0 and 1/(2 kappa) < T");
    const SingularFlow y = static_flow(two_point_triple(p, "y0", "y1"), 0.0, t_end, "Y");
    // Z has Ricci bound κ (rate κ/2) and shrinks with L_t = 1/(1 - 2κt).
    const SingularFlow zs = scaled_flow(two_point_triple(0.5 * kappa, "z0", "z1"),
                                        RateSchedule::soliton_scaled(1.0, kappa), 0.0, t1, "Z");
    IntervalSpec after = point_interval(t1, t_end);
    SingularTransition mid = zs.transition(1);
    mid.spawn_map = {0};
    SingularTransition fin = make_transition(t_end, {"*"}, {0}, {}, &after, nullptr);
    const SingularFlow z({zs.interval(0), after}, {zs.transition(0), mid, fin}, "Z");
    SingularFlow out = product_flow(y, z);
    return SingularFlow(out.intervals(), out.transitions(), name);
  }
  if (name == "explosion_product") {
    require_known(params, {"kappa", "q", "p", "t1", "T"}, name);
    const double kappa = param(params, "kappa", -1.0);
    const double q = param(params, "q", 1.0);
    const double p = param(params, "p", 1.0);
    const double t1 = param(params, "t1", 0.5);
    const double t_end = param(params, "T", 1.0);
    require(kappa < 0.0 && q > 0.0 && p > 0.0 && 0.0 < t1 && t1 < t_end, name,
            "need kappa < 0, q > 0, p > 0 and 0 < t1 < T");
    const SingularFlow y = static_flow(two_point_triple(p, "y0", "y1"), 0.0, t_end, "Y");
    // After t1, Z (two-point, rate q) expands with L_t = -1/(2κ(t - t1)).
    const MarkovTriple zt = two_point_triple(q, "z0", "z1");
    IntervalSpec before = point_interval(0.0, t1);
    SingularFlow zs = scaled_flow(zt, RateSchedule::spawn_pole(-1.0 / (2.0 * kappa), t1), t1, t_end, "Z");
    SingularTransition start = make_transition(0.0, {"*"}, {}, {0}, nullptr, &before);
    SingularTransition mid = zs.transition(0);
    mid.collapse_map = {0};
    const SingularFlow z({before, zs.interval(0)}, {start, mid, zs.transition(1)}, "Z");
    SingularFlow out = product_flow(y, z);
    return SingularFlow(out.intervals(), out.transitions(), name);
  }
  if (name == "toy") {
    require_known(params, {"t1", "T"}, name);
    const double t1 = param(params, "t1", 0.5);
    const double t_end = param(params, "T", 1.0);
    require(0.0 < t1 && t1 < t_end, name, "need 0 < t1 < T");
    // Before t1: red triangle r1,r2,r3 with rates 1/(t1 - t), blue b tied to r1.
    IntervalSpec a;
    a.t_start = 0.0;
    a.t_end = t1;
    a.states = {"r1", "r2", "r3", "b"};
    a.pi.assign(4, PiSchedule::constant(0.25));
    for (int x = 0; x < 3; ++x)
      for (int y = 0; y < 3; ++y)
        if (x != y) a.edges.push_back({x, y, RateSchedule::collapse_pole(1.0, t1)});
    a.edges.push_back({0, 3, RateSchedule::constant(1.0)});
    a.edges.push_back({3, 0, RateSchedule::constant(1.0)});
    // After t1: R = collapsed triangle, b spawns b2 with rates 1/(t - t1).
    IntervalSpec b;
    b.t_start = t1;
    b.t_end = t_end;
    b.states = {"R", "b", "b2"};
    b.pi = {PiSchedule::constant(0.75), PiSchedule::constant(0.125), PiSchedule::constant(0.125)};
    b.edges.push_back({0, 1, RateSchedule::constant(1.0 / 3.0)});
    b.edges.push_back({1, 0, RateSchedule::constant(2.0)});
    b.edges.push_back({1, 2, RateSchedule::spawn_pole(1.0, t1)});
    b.edges.push_back({2, 1, RateSchedule::spawn_pole(1.0, t1)});
    SingularTransition s0 = make_transition(0.0, a.states, {}, {0, 1, 2, 3}, nullptr, &a);
    SingularTransition s1 = make_transition(t1, {"R", "b"}, {0, 0, 0, 1}, {0, 1, 1}, &a, nullptr);
    SingularTransition s2 = make_transition(t_end, b.states, {0, 1, 2}, {}, &b, nullptr);
    return SingularFlow({a, b}, {s0, s1, s2}, name);
  }
  throw contract_error("unknown builtin scenario '" + name + "'");
}

}  // namespace

std::vector<std::string> builtin_names() {
  return {"static", "two_point_soliton", "supercritical_two_point", "expanding_soliton",
          "collapse_product", "explosion_product", "toy"};
}

SingularFlow builtin_scenario(const std::string& name, const ScenarioParams& params) {
  SingularFlow flow = build(name, params);
  const ValidationReport report = validate_flow(flow);
  if (!report.ok())
    throw validation_error("builtin '" + name + "' failed validation: " + report.summary());
  return flow;
}

}  // namespace srf
