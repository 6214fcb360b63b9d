#include "srf/curvature.hpp"

#include "srf/errors.hpp"
#include "srf/heatflow.hpp"
#include "srf/transport.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>

namespace srf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Lower bound on the masses during the searches over the simplex.
constexpr double kFloor = 1e-9;

// Independent, reproducible stream per (seed, stream, index).
std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return std::mt19937_64(mix(mix(mix(seed) ^ stream) ^ index));
}

Measure random_interior(std::mt19937_64& rng, int n) {
  std::exponential_distribution<double> e(1.0);
  Measure mu(n);
  for (int i = 0; i < n; ++i) mu(i) = e(rng) + 1e-3;
  return mu / mu.sum();
}

// Runs body(i) for i in [0, count) on `threads` workers. Each index writes
// only its own result slot, so merging afterwards is deterministic.
void parallel_for(int count, int threads, const std::function<void(int)>& body) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<size_t>(threads));
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      try {
        for (int i = next++; i < count; i = next++) body(i);
      } catch (...) {
        errors[static_cast<size_t>(w)] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

bool is_singular(const SingularFlow& flow, double t) { return flow.transition_at(t).has_value(); }

double max_rate(const MarkovTriple& triple) {
  double m = 0.0;
  for (const Edge& e : triple.edges())
    m = std::max({m, triple.rate(e.x, e.y), triple.rate(e.y, e.x)});
  return m;
}

// Euclidean projection onto {μ ≥ floor, Σμ = 1}.
Measure project_simplex(const Measure& v, double floor) {
  const int n = static_cast<int>(v.size());
  const double mass = 1.0 - n * floor;
  Vector u = v.array() - floor;
  Vector s = u;
  std::sort(s.data(), s.data() + n, std::greater<double>());
  double cum = 0.0, theta = 0.0;
  for (int k = 0; k < n; ++k) {
    cum += s(k);
    const double th = (cum - mass) / (k + 1);
    if (s(k) - th > 0.0) theta = th;
  }
  return (u.array() - theta).max(0.0) + floor;
}

// min over x ∈ range(B) of xᵀAx / xᵀBx for symmetric A and positive
// semidefinite B; the minimizer is normalized to xᵀBx = 1.
struct EigenMin {
  double value = kInf;
  Vector vec;
  bool restricted = false;  // B has null directions beyond constants
};

EigenMin min_generalized(const Matrix& a_in, const Matrix& b_in) {
  const int n = static_cast<int>(a_in.rows());
  const Matrix a = 0.5 * (a_in + a_in.transpose());
  const Matrix b = 0.5 * (b_in + b_in.transpose());
  EigenMin out;
  out.vec = Vector::Zero(n);
  Eigen::SelfAdjointEigenSolver<Matrix> eb(b);
  const double cut = 1e-12 * std::max(eb.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
  std::vector<int> keep;
  for (int i = 0; i < n; ++i)
    if (eb.eigenvalues()(i) > cut) keep.push_back(i);
  const int r = static_cast<int>(keep.size());
  out.restricted = r < n - 1;
  if (r == 0) return out;
  // Whitened basis of range(B): columns v_i/√λ_i.
  Matrix w(n, r);
  for (int j = 0; j < r; ++j) {
    const int i = keep[static_cast<size_t>(j)];
    w.col(j) = eb.eigenvectors().col(i) / std::sqrt(eb.eigenvalues()(i));
  }
  Matrix m = w.transpose() * a * w;
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> em(m);
  out.value = em.eigenvalues()(0);
  out.vec = w * em.eigenvectors().col(0);
  return out;
}

// Multi-start projected-gradient minimization over {μ ≥ floor, Σμ = 1} of an
// objective that also returns an associated vector (the worst potential).
// Starts: `centre`, ε-mixed corners, then random interior points.
struct SimplexSearch {
  double value = kInf;
  Measure mu;
  Vector vec;
  int starts = 0;
};

using SimplexObjective = std::function<EigenMin(const Measure&)>;

SimplexSearch search_simplex(const Measure& centre, const SimplexObjective& f, int starts,
                             std::mt19937_64& rng, int max_iterations = 200) {
  const int n = static_cast<int>(centre.size());
  std::vector<Measure> init{centre};
  for (int i = 0; i < n && static_cast<int>(init.size()) < starts; ++i) {
    Measure c = 0.05 * centre;
    c(i) += 0.95;
    init.push_back(c);
  }
  while (static_cast<int>(init.size()) < starts) init.push_back(random_interior(rng, n));

  auto value = [&](const Measure& mu) { return f(mu).value; };
  SimplexSearch best;
  best.starts = static_cast<int>(init.size());
  for (Measure mu : init) {
    mu = project_simplex(mu, kFloor);
    double fv = value(mu);
    double step = 0.0;
    int flat = 0;
    for (int it = 0; it < max_iterations && flat < 3 && n >= 2 && std::isfinite(fv); ++it) {
      // Relative central differences; the mean is removed to obtain the
      // gradient along the simplex.
      Vector grad(n);
      for (int i = 0; i < n; ++i) {
        const double h = 1e-6 * mu(i);
        Measure up = mu, dn = mu;
        up(i) += h;
        dn(i) -= h;
        grad(i) = (value(up) - value(dn)) / (2.0 * h);
      }
      grad.array() -= grad.mean();
      const double gnorm = grad.cwiseAbs().maxCoeff();
      if (!(gnorm > 0.0) || !std::isfinite(gnorm)) break;
      step = step == 0.0 ? 0.1 / gnorm : 2.0 * step;
      bool moved = false;
      for (int ls = 0; ls < 40; ++ls, step *= 0.5) {
        const Measure trial = project_simplex(mu - step * grad, kFloor);
        if ((trial - mu).cwiseAbs().maxCoeff() == 0.0) break;
        const double ft = value(trial);
        if (ft <= fv - 1e-4 * grad.dot(mu - trial)) {
          flat = fv - ft <= 1e-13 * (1.0 + std::abs(fv)) ? flat + 1 : 0;
          mu = trial;
          fv = ft;
          moved = true;
          break;
        }
      }
      if (!moved) break;
    }
    if (best.mu.size() == 0 || fv < best.value) {
      best.value = fv;
      best.mu = mu;
    }
  }
  best.vec = f(best.mu).vec;
  return best;
}

// Result of one sampled configuration.
struct Sample {
  bool ok = false;
  double slack = 0.0;
  double tolerance = 0.0;
  Witness witness;
  std::string error;
};

VerificationReport merge(Criterion criterion, const std::vector<Sample>& samples,
                         double default_tolerance) {
  VerificationReport r;
  r.criterion = criterion;
  r.tolerance = default_tolerance;
  const Sample* worst = nullptr;
  const Sample* worst_violation = nullptr;
  for (const Sample& s : samples) {
    ++r.samples;
    if (!s.ok) {
      ++r.inconclusive_samples;
      if (r.notes.size() < 8) r.notes.push_back("inconclusive sample: " + s.error);
      continue;
    }
    if (!worst || s.slack < worst->slack) worst = &s;
    if (s.slack < -s.tolerance &&
        (!worst_violation ||
         s.slack + s.tolerance < worst_violation->slack + worst_violation->tolerance))
      worst_violation = &s;
  }
  if (const Sample* pick = worst_violation ? worst_violation : worst) {
    r.margin = pick->slack;
    r.tolerance = pick->tolerance;
    r.witness = pick->witness;
  }
  if (worst_violation)
    r.verdict = Verdict::violation;
  else if (!worst || r.inconclusive_samples > 0)
    r.verdict = Verdict::inconclusive;
  else
    r.verdict = Verdict::pass;
  return r;
}

// (s, t) pairs: straddling pairs around every interior singular time, then
// random pairs with t uniform and a log-uniform gap t − s ∈ [1e-3, 1]·(T − t₀).
std::vector<std::pair<double, double>> time_pairs(const SingularFlow& flow, int count,
                                                  const VerifyOptions& opt, std::uint64_t stream) {
  std::vector<std::pair<double, double>> pairs;
  const double t0 = flow.t_start(), t1 = flow.t_end();
  for (int i = 1; i + 1 < static_cast<int>(flow.transitions().size()); ++i)
    for (double d : opt.straddle) {
      const double ti = flow.transition(i).time;
      if (ti - d > t0 && ti + d < t1 && static_cast<int>(pairs.size()) < count)
        pairs.emplace_back(ti - d, ti + d);
    }
  std::mt19937_64 rng = sample_rng(opt.seed, stream, 0);
  std::uniform_real_distribution<double> u(t0, t1), expo(-3.0, 0.0);
  while (static_cast<int>(pairs.size()) < count) {
    const double t = u(rng);
    const double s = t - (t1 - t0) * std::pow(10.0, expo(rng));
    if (s <= t0 || t >= t1 || is_singular(flow, s) || is_singular(flow, t)) continue;
    pairs.emplace_back(s, t);
  }
  return pairs;
}

// Grid of n non-singular times in (t0, T), at cell midpoints.
std::vector<double> time_grid(const SingularFlow& flow, int n) {
  std::vector<double> out;
  const double t0 = flow.t_start(), t1 = flow.t_end();
  for (int j = 0; j < n; ++j) {
    double t = t0 + (t1 - t0) * (j + 0.5) / n;
    if (is_singular(flow, t)) t += 1e-6 * (t1 - t0);
    out.push_back(t);
  }
  return out;
}

HeatOptions heat_options(const VerifyOptions& opt) {
  HeatOptions h;
  h.rtol = opt.heat_rtol;
  h.samples_per_interval = 2;
  return h;
}

// Triples at s and t with the matrix of P_{t,s} (columns P e_x); the dual
// propagator P̂_{t,s} is its transpose.
struct TimePair {
  double s = 0.0;
  double t = 0.0;
  MarkovTriple at_s;
  MarkovTriple at_t;
  Matrix p;
};

TimePair time_pair(const SingularFlow& flow, double s, double t, const VerifyOptions& opt) {
  TimePair tp{s, t, eval_at(flow, s).triple, eval_at(flow, t).triple, Matrix()};
  const int ns = tp.at_s.size();
  tp.p.resize(tp.at_t.size(), ns);
  const HeatOptions h = heat_options(opt);
  for (int x = 0; x < ns; ++x)
    tp.p.col(x) = propagate(flow, s, t, Vector::Unit(ns, x), h).result;
  return tp;
}

// Gradient estimate at μ: Γ_s(P̂μ,ψ) − Γ_t(μ,Pψ) relative to Γ_s(P̂μ,ψ),
// minimized over ψ.
EigenMin gradient_form(const TimePair& tp, const Measure& mu) {
  const Matrix bs = gamma_form(tp.at_s, tp.p.transpose() * mu);
  const Matrix bt = gamma_form(tp.at_t, mu);
  return min_generalized(bs - tp.p.transpose() * bt * tp.p, bs);
}

// Reverse Poincaré at μ: the variance ⟨P(ψ²),μ⟩ − ⟨(Pψ)²,μ⟩ minus
// 2(t−s)Γ_t(μ,Pψ), relative to the variance, minimized over ψ.
EigenMin poincare_form(const TimePair& tp, const Measure& mu) {
  const Vector pmu = tp.p.transpose() * mu;
  const Matrix var = Matrix(pmu.asDiagonal()) - tp.p.transpose() * mu.asDiagonal() * tp.p;
  const Matrix r = 2.0 * (tp.t - tp.s) * tp.p.transpose() * gamma_form(tp.at_t, mu) * tp.p;
  return min_generalized(var - r, var);
}

// --- per-sample evaluations from the heat flows directly (used for the
// reported witnesses)

double gradient_slack(const SingularFlow& flow, double s, double t, const Measure& mu,
                      const VertexFunction& psi, const VerifyOptions& opt) {
  const HeatOptions h = heat_options(opt);
  const Vector p_psi = propagate(flow, s, t, psi, h).result;
  const Vector p_mu = propagate_dual(flow, s, t, mu, h).result;
  const double lhs = gamma(eval_at(flow, t).triple, mu, p_psi);
  const double rhs = gamma(eval_at(flow, s).triple, p_mu, psi);
  return rhs > 0.0 ? (rhs - lhs) / rhs : 0.0;
}

double poincare_slack(const SingularFlow& flow, double s, double t, const Measure& mu,
                      const VertexFunction& psi, const VerifyOptions& opt) {
  const HeatOptions h = heat_options(opt);
  const Vector p_psi = propagate(flow, s, t, psi, h).result;
  const Vector p_sq = propagate(flow, s, t, psi.array().square().matrix(), h).result;
  const double variance = p_sq.dot(mu) - p_psi.array().square().matrix().dot(mu);
  const double rhs = 2.0 * (t - s) * gamma(eval_at(flow, t).triple, mu, p_psi);
  return variance > 0.0 ? (variance - rhs) / variance : 0.0;
}

double transport_slack(const SingularFlow& flow, double s, double t, const Measure& mu,
                       const Measure& nu, const VerifyOptions& opt) {
  const HeatOptions h = heat_options(opt);
  const MarkovTriple at_t = eval_at(flow, t).triple;
  const MarkovTriple at_s = eval_at(flow, s).triple;
  if (at_t.size() < 2) return 0.0;
  const double upper_t = primal_w2(at_t, mu, nu, opt.transport_K).value;
  if (at_s.size() < 2) return upper_t;
  const Measure p_mu = propagate_dual(flow, s, t, mu, h).result;
  const Measure p_nu = propagate_dual(flow, s, t, nu, h).result;
  const double lower_s = dual_w2_lower(at_s, p_mu, p_nu, opt.transport_K).value;
  return upper_t - lower_s;
}

struct ConvexitySample {
  double slack = 0.0;
  double band = 0.0;
};

// One-sided difference quotients of the entropy at both ends of the
// geodesic, and the backward difference quotient of 𝒲² in time, each from
// two steps combined by linear extrapolation.
ConvexitySample convexity_slack(const SingularFlow& flow, double t, const Measure& mu0,
                                const Measure& mu1, const VerifyOptions& opt) {
  const MarkovTriple at_t = eval_at(flow, t).triple;
  const int k = opt.convexity_K;
  const GeodesicResult geo = geodesic(at_t, mu0, mu1, k);
  std::vector<double> ent;
  for (const Measure& m : geo.path.mu) ent.push_back(entropy(at_t, m));
  const double a1 = 1.0 / k;
  auto start_quotient = [&](int j) { return (ent[static_cast<size_t>(j)] - ent[0]) / (j * a1); };
  auto end_quotient = [&](int j) {
    return (ent[static_cast<size_t>(k)] - ent[static_cast<size_t>(k - j)]) / (j * a1);
  };
  const double d0 = 2.0 * start_quotient(1) - start_quotient(2);
  const double d1 = 2.0 * end_quotient(1) - end_quotient(2);
  const double lhs = d1 - d0;

  const double w2 = geo.value * geo.value;
  auto time_quotient = [&](double h) {
    const MarkovTriple before = eval_at(flow, t - h).triple;
    const double w = primal_w2(before, geo.path.mu.front(), geo.path.mu.back(), k).value;
    return (w2 - w * w) / h;
  };
  const double b1 = time_quotient(opt.convexity_dt);
  const double b2 = time_quotient(0.5 * opt.convexity_dt);
  const double dw2 = 2.0 * b2 - b1;

  ConvexitySample out;
  out.slack = lhs + 0.5 * dw2;
  const double spread = std::abs(d0 - start_quotient(1)) + std::abs(d1 - end_quotient(1)) +
                        0.5 * std::abs(dw2 - b2);
  out.band = opt.convexity_band * spread + opt.convexity_floor * (1.0 + std::abs(lhs));
  return out;
}

// Samples over (s, t) pairs: for each pair the worst (μ, ψ) of a quadratic
// form is searched, then the slack is recomputed from the heat flows.
template <class Form, class Slack>
VerificationReport pair_form_check(const SingularFlow& flow, const VerifyOptions& opt,
                                   Criterion criterion, int count, double tolerance,
                                   std::uint64_t stream, Form form, Slack slack) {
  const auto pairs = time_pairs(flow, count, opt, stream);
  std::vector<Sample> out(pairs.size());
  parallel_for(static_cast<int>(pairs.size()), worker_count(opt.threads), [&](int j) {
    Sample& smp = out[static_cast<size_t>(j)];
    const auto [s, t] = pairs[static_cast<size_t>(j)];
    std::mt19937_64 rng = sample_rng(opt.seed, stream, static_cast<std::uint64_t>(j) + 1);
    smp.witness.times = {s, t};
    try {
      const TimePair tp = time_pair(flow, s, t, opt);
      if (tp.at_s.size() < 2) {
        // Functions on a single state are constant: both sides vanish.
        smp.witness.mu = Measure::Constant(tp.at_t.size(), 1.0 / tp.at_t.size());
        smp.witness.psi = VertexFunction::Zero(1);
        smp.ok = true;
        smp.tolerance = tolerance;
        return;
      }
      const SimplexSearch best = search_simplex(
          tp.at_t.pi(), [&](const Measure& mu) { return form(tp, mu); }, opt.pair_starts, rng);
      smp.witness.mu = best.mu;
      smp.witness.psi = best.vec;
      smp.slack = slack(flow, s, t, best.mu, best.vec, opt);
      smp.tolerance = tolerance;
      smp.ok = true;
    } catch (const std::exception& e) {
      smp.error = "s=" + std::to_string(s) + " t=" + std::to_string(t) + ": " + e.what();
    }
  });
  VerificationReport r = merge(criterion, out, tolerance);
  r.notes.push_back(std::to_string(pairs.size()) + " time pairs x " + std::to_string(opt.pair_starts) +
                    " measure starts, worst potential by generalized eigenvalue; slack is relative");
  return r;
}

}  // namespace

const char* to_string(Criterion c) {
  switch (c) {
    case Criterion::bochner: return "bochner";
    case Criterion::gradient_estimate: return "gradient_estimate";
    case Criterion::transport_estimate: return "transport_estimate";
    case Criterion::dynamic_convexity: return "dynamic_convexity";
    case Criterion::reverse_poincare: return "reverse_poincare";
    case Criterion::static_ricci: return "static_ricci";
    case Criterion::aggregate: return "aggregate";
  }
  return "?";
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::violation: return "violation";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "?";
}

int worker_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SRF_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

BochnerForm bochner_form(const MarkovTriple& triple, const std::optional<Matrix>& rate_dot,
                         const Measure& mu) {
  require_same_size(triple, mu, "bochner_form: mu");
  BochnerForm f;
  f.a = gamma2_form(triple, mu);
  if (rate_dot) f.a -= 0.5 * dt_gamma_form(triple, *rate_dot, mu);
  f.b = gamma_form(triple, mu);
  return f;
}

BochnerGap bochner_gap(const MarkovTriple& triple, const std::optional<Matrix>& rate_dot,
                       const Measure& mu) {
  require_same_size(triple, mu, "bochner_gap: mu");
  if (!(mu.minCoeff() > 0.0)) throw std::domain_error("bochner_gap: mu must be interior");
  BochnerGap g;
  if (triple.size() < 2) {
    g.value = kInf;
    g.psi = VertexFunction::Zero(triple.size());
    return g;
  }
  const BochnerForm f = bochner_form(triple, rate_dot, mu);
  const EigenMin e = min_generalized(f.a, f.b);
  g.value = e.value;
  g.psi = e.vec.array() - e.vec.mean();
  g.restricted = e.restricted;
  return g;
}

BochnerGap bochner_gap(const SingularFlow& flow, double t, const Measure& mu) {
  if (is_singular(flow, t)) throw contract_error("bochner_gap: t is a singular time");
  const FlowPoint p = eval_at(flow, t);
  if (!p.rate_dot) throw contract_error("bochner_gap: rates at t have no analytic derivative");
  return bochner_gap(p.triple, p.rate_dot, mu);
}

GapMinimum minimize_gap(const MarkovTriple& triple, const std::optional<Matrix>& rate_dot,
                        int starts, std::uint64_t seed) {
  std::mt19937_64 rng = sample_rng(seed, 0xb0c4, 0);
  const SimplexSearch s = search_simplex(
      triple.pi(),
      [&](const Measure& mu) {
        const BochnerGap g = bochner_gap(triple, rate_dot, mu);
        return EigenMin{g.value, g.psi, g.restricted};
      },
      std::max(starts, 1), rng);
  return GapMinimum{s.value, s.mu, s.vec, s.starts};
}

double static_ricci_bound(const MarkovTriple& triple, int starts, std::uint64_t seed) {
  return minimize_gap(triple, std::nullopt, starts, seed).value;
}

VerificationReport check_bochner(const SingularFlow& flow, const VerifyOptions& opt) {
  const std::vector<double> times = time_grid(flow, opt.bochner_times);
  std::vector<Sample> out(times.size());
  parallel_for(static_cast<int>(times.size()), worker_count(opt.threads), [&](int j) {
    Sample& s = out[static_cast<size_t>(j)];
    const double t = times[static_cast<size_t>(j)];
    s.witness.times = {t};
    try {
      const FlowPoint p = eval_at(flow, t);
      if (!p.rate_dot) throw contract_error("no analytic rate derivative at t");
      const GapMinimum m = minimize_gap(p.triple, p.rate_dot, opt.bochner_starts,
                                        opt.seed ^ static_cast<std::uint64_t>(j));
      s.slack = std::isfinite(m.value) ? m.value : 0.0;
      s.tolerance = opt.bochner_tolerance * (1.0 + max_rate(p.triple));
      s.witness.mu = m.mu;
      s.witness.psi = m.psi;
      s.ok = true;
    } catch (const std::exception& e) {
      s.error = "t=" + std::to_string(t) + ": " + e.what();
    }
  });
  VerificationReport r = merge(Criterion::bochner, out, opt.bochner_tolerance);
  r.notes.push_back(std::to_string(times.size()) + " times x " + std::to_string(opt.bochner_starts) +
                    " projected-gradient starts; pass means not disproved");
  return r;
}

VerificationReport check_gradient_estimate(const SingularFlow& flow, const VerifyOptions& opt) {
  return pair_form_check(flow, opt, Criterion::gradient_estimate, opt.gradient_samples,
                         opt.gradient_tolerance, 0x6e2, gradient_form, gradient_slack);
}

VerificationReport check_reverse_poincare(const SingularFlow& flow, const VerifyOptions& opt) {
  VerificationReport r = pair_form_check(flow, opt, Criterion::reverse_poincare,
                                         opt.poincare_samples, opt.poincare_tolerance, 0x9c,
                                         poincare_form, poincare_slack);
  r.notes.push_back("the inequality is implied by the super-Ricci-flow property");
  return r;
}

VerificationReport check_transport_estimate(const SingularFlow& flow, const VerifyOptions& opt) {
  const auto pairs = time_pairs(flow, opt.transport_samples, opt, 0x7a);
  std::vector<Sample> out(pairs.size());
  parallel_for(static_cast<int>(pairs.size()), worker_count(opt.threads), [&](int j) {
    Sample& smp = out[static_cast<size_t>(j)];
    const auto [s, t] = pairs[static_cast<size_t>(j)];
    std::mt19937_64 rng = sample_rng(opt.seed, 0x7a, static_cast<std::uint64_t>(j) + 1);
    smp.witness.times = {s, t};
    try {
      const TimePair tp = time_pair(flow, s, t, opt);
      const int n = tp.at_t.size();
      Measure mu = random_interior(rng, n), nu = random_interior(rng, n);
      if (j % 2 == 1 && n >= 2 && tp.at_s.size() >= 2) {
        // Screened pair: the measure and tangent direction v = K_μ(Pψ) that
        // expand most under the dual flow to first order, then the pair
        // μ ± ηv with η keeping both endpoints above half of μ.
        const SimplexSearch best = search_simplex(
            tp.at_t.pi(), [&](const Measure& m) { return gradient_form(tp, m); }, opt.pair_starts,
            rng);
        const Vector v = gamma_form(tp.at_t, best.mu) * (tp.p * best.vec);
        double eta = kInf;
        for (int x = 0; x < n; ++x)
          if (std::abs(v(x)) > 0.0) eta = std::min(eta, 0.5 * best.mu(x) / std::abs(v(x)));
        if (std::isfinite(eta)) {
          mu = best.mu - eta * v;
          nu = best.mu + eta * v;
        }
      }
      smp.witness.mu = mu;
      smp.witness.nu = nu;
      smp.slack = transport_slack(flow, s, t, mu, nu, opt);
      smp.tolerance = opt.transport_tolerance;
      smp.ok = true;
    } catch (const std::exception& e) {
      smp.error = "s=" + std::to_string(s) + " t=" + std::to_string(t) + ": " + e.what();
    }
  });
  VerificationReport r = merge(Criterion::transport_estimate, out, opt.transport_tolerance);
  r.notes.push_back("slack = primal upper value at t minus dual-certified lower value at s, K=" +
                    std::to_string(opt.transport_K) +
                    "; odd samples use first-order screened endpoint pairs");
  return r;
}

VerificationReport check_dynamic_convexity(const SingularFlow& flow, const VerifyOptions& opt) {
  // Times need room for the backward time differences inside their interval.
  std::vector<double> times;
  for (double t : time_grid(flow, opt.convexity_times)) {
    const IntervalSpec& iv = flow.interval(flow.interval_at(t));
    if (t - 2.0 * opt.convexity_dt > iv.t_start && iv.size() >= 2) times.push_back(t);
  }
  const int pairs = std::max(1, opt.convexity_pairs);
  const int count = static_cast<int>(times.size()) * pairs;
  std::vector<Sample> out(static_cast<size_t>(count));
  parallel_for(count, worker_count(opt.threads), [&](int j) {
    Sample& s = out[static_cast<size_t>(j)];
    const double t = times[static_cast<size_t>(j / pairs)];
    std::mt19937_64 rng = sample_rng(opt.seed, 0xd1, static_cast<std::uint64_t>(j) + 1);
    s.witness.times = {t};
    try {
      const MarkovTriple tr = eval_at(flow, t).triple;
      // Interior endpoints: random measures mixed with π.
      s.witness.mu = 0.9 * random_interior(rng, tr.size()) + 0.1 * tr.pi();
      s.witness.nu = 0.9 * random_interior(rng, tr.size()) + 0.1 * tr.pi();
      const ConvexitySample c = convexity_slack(flow, t, s.witness.mu, s.witness.nu, opt);
      s.slack = c.slack;
      s.tolerance = c.band;
      s.ok = true;
    } catch (const std::exception& e) {
      s.error = "t=" + std::to_string(t) + ": " + e.what();
    }
  });
  VerificationReport r = merge(Criterion::dynamic_convexity, out, opt.convexity_floor);
  r.notes.push_back(std::to_string(times.size()) + " times x " + std::to_string(pairs) +
                    " endpoint pairs, K=" + std::to_string(opt.convexity_K));
  return r;
}

VerificationReport verify_srf(const SingularFlow& flow, const VerifyOptions& opt) {
  VerificationReport r;
  r.criterion = Criterion::aggregate;
  r.parts.push_back(check_bochner(flow, opt));
  r.parts.push_back(check_gradient_estimate(flow, opt));
  r.parts.push_back(check_transport_estimate(flow, opt));
  r.parts.push_back(check_dynamic_convexity(flow, opt));
  r.parts.push_back(check_reverse_poincare(flow, opt));
  bool all_pass = true, any_violation = false;
  r.margin = kInf;
  for (const VerificationReport& p : r.parts) {
    r.samples += p.samples;
    r.inconclusive_samples += p.inconclusive_samples;
    all_pass = all_pass && p.verdict == Verdict::pass;
    any_violation = any_violation || p.verdict == Verdict::violation;
    // Aggregate margin in units of each part's tolerance.
    if (p.tolerance > 0.0) r.margin = std::min(r.margin, p.margin / p.tolerance);
  }
  r.verdict = all_pass ? Verdict::pass : any_violation ? Verdict::violation : Verdict::inconclusive;
  for (size_t i = 1; i < 4; ++i)
    r.consistent = r.consistent && r.parts[i].verdict == r.parts[0].verdict;
  if (!r.consistent)
    r.notes.push_back("criteria (I)-(IV) disagree although they are equivalent: a sampling budget "
                      "or tolerance band does not fit this flow");
  r.tolerance = 1.0;
  return r;
}

double reevaluate_witness(const SingularFlow& flow, const VerificationReport& report,
                          const VerifyOptions& opt) {
  if (!report.witness) throw contract_error("reevaluate_witness: report has no witness");
  const Witness& w = *report.witness;
  switch (report.criterion) {
    case Criterion::bochner:
      return bochner_gap(flow, w.times.at(0), w.mu).value;
    case Criterion::gradient_estimate:
      return gradient_slack(flow, w.times.at(0), w.times.at(1), w.mu, w.psi, opt);
    case Criterion::reverse_poincare:
      return poincare_slack(flow, w.times.at(0), w.times.at(1), w.mu, w.psi, opt);
    case Criterion::transport_estimate:
      return transport_slack(flow, w.times.at(0), w.times.at(1), w.mu, w.nu, opt);
    case Criterion::dynamic_convexity:
      return convexity_slack(flow, w.times.at(0), w.mu, w.nu, opt).slack;
    default:
      throw contract_error("reevaluate_witness: no recomputation for this criterion");
  }
}

}  // namespace srf
