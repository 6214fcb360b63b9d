#include "srf/cli.hpp"

#include "srf/curvature.hpp"
#include "srf/errors.hpp"
#include "srf/heatflow.hpp"
#include "srf/report.hpp"
#include "srf/scenario_io.hpp"
#include "srf/transport.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>

namespace srf {

using nlohmann::json;

namespace {

struct Flags {
  std::string scenario;
  std::uint64_t seed = 1;
  std::optional<double> tol;
  std::optional<int> grid;
  std::optional<int> samples;
  std::string out_dir;
  std::string format = "text";
  int threads = 0;
  bool timing = false;
  // Command-specific inputs.
  double from = 0.0;
  double to = 0.0;
  double time = 0.0;
  std::string psi = "delta:0";
  std::string sigma = "pi";
  std::string mu;
  std::string nu;
};

// Artifacts of one command besides the report.
struct Outcome {
  RunReport report;
  std::vector<TableRow> table;
  std::string table_time_column = "time";
  std::string table_name;
  std::optional<json> scenario;
};

int verdict_code(Verdict v) {
  switch (v) {
    case Verdict::pass: return exit_pass;
    case Verdict::violation: return exit_violation;
    case Verdict::inconclusive: return exit_numerical_failure;
  }
  return exit_numerical_failure;
}

json named_values(const std::vector<std::string>& states, const Vector& v) {
  json j = json::object();
  for (size_t i = 0; i < states.size(); ++i) j[states[i]] = v(static_cast<Eigen::Index>(i));
  return j;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw contract_error("'" + item + "' is not a number");
    }
  }
  return out;
}

int state_index(const std::vector<std::string>& states, const std::string& name) {
  for (size_t i = 0; i < states.size(); ++i)
    if (states[i] == name) return static_cast<int>(i);
  // Positions are accepted too: "k" or "vk" is the k-th vertex.
  const std::string digits = name.rfind('v', 0) == 0 ? name.substr(1) : name;
  try {
    size_t used = 0;
    const int k = std::stoi(digits, &used);
    if (used == digits.size() && k >= 0 && k < static_cast<int>(states.size())) return k;
  } catch (const std::exception&) {
  }
  throw contract_error("unknown state '" + name + "'");
}

// Vectors given on the command line:
//   delta:NAME | const:C | values:a,b,... | uniform | pi | NAME (a probe of the scenario)
Vector resolve_vector(const std::string& spec, const ScenarioDocument& doc, double t, bool measure) {
  const std::vector<std::string>& states = doc.flow.states_at(t);
  const int n = static_cast<int>(states.size());
  const auto colon = spec.find(':');
  const std::string head = spec.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);
  Vector v;
  if (head == "delta" && colon != std::string::npos) {
    v = Vector::Zero(n);
    v(state_index(states, rest)) = 1.0;
  } else if (head == "const" && colon != std::string::npos) {
    const std::vector<double> c = parse_list(rest);
    if (c.size() != 1) throw contract_error("const: expects one number");
    v = Vector::Constant(n, c[0]);
  } else if (head == "values" && colon != std::string::npos) {
    const std::vector<double> c = parse_list(rest);
    v = Eigen::Map<const Vector>(c.data(), static_cast<Eigen::Index>(c.size()));
  } else if (spec == "uniform") {
    v = Vector::Constant(n, 1.0 / n);
  } else if (spec == "pi") {
    v = eval_at(doc.flow, t).triple.pi();
  } else {
    const auto& probes = measure ? doc.measures : doc.potentials;
    const auto it = probes.find(spec);
    if (it == probes.end())
      throw contract_error("'" + spec + "' is neither a vector spec nor a probe of the scenario");
    v = it->second;
  }
  if (v.size() != n)
    throw contract_error("'" + spec + "' has " + std::to_string(v.size()) + " entries, expected " +
                         std::to_string(n));
  return v;
}

VerifyOptions verify_options(const Flags& f) {
  VerifyOptions o;
  o.seed = f.seed;
  o.threads = f.threads;
  if (f.grid) o.transport_K = o.convexity_K = *f.grid;
  return o;
}

json tolerance_json(const VerifyOptions& o) {
  return {{"bochner", o.bochner_tolerance},
          {"gradient_estimate", o.gradient_tolerance},
          {"transport_estimate", o.transport_tolerance},
          {"dynamic_convexity_band", o.convexity_band},
          {"dynamic_convexity_floor", o.convexity_floor},
          {"reverse_poincare", o.poincare_tolerance},
          {"heat_rtol", o.heat_rtol}};
}

void add_trajectory(Outcome& o, const SingularFlow& flow, const HeatSolution& sol, bool with_mass) {
  struct Point {
    double time;
    const std::vector<std::string>* states;
    Vector value;
  };
  std::vector<Point> points;
  for (const TrajectorySegment& seg : sol.segments)
    for (size_t i = 0; i < seg.times.size(); ++i)
      points.push_back({seg.times[i], &flow.interval(seg.interval).states, seg.values[i]});
  for (const BoundaryValue& b : sol.boundaries)
    points.push_back({b.time, &flow.transition(b.transition).states, b.value});
  std::stable_sort(points.begin(), points.end(),
                   [](const Point& a, const Point& b) { return a.time < b.time; });
  double drift = 0.0;
  const double mass0 = sol.initial.sum();
  for (const Point& p : points) {
    for (size_t x = 0; x < p.states->size(); ++x)
      o.table.push_back({p.time, (*p.states)[x], p.value(static_cast<Eigen::Index>(x))});
    if (with_mass) {
      o.table.push_back({p.time, "mass", p.value.sum()});
      drift = std::max(drift, std::abs(p.value.sum() - mass0));
    }
  }
  if (with_mass) o.report.results["max_mass_drift"] = drift;
  o.report.diagnostics["steps"] = sol.steps;
  o.report.diagnostics["rejected_steps"] = sol.rejected_steps;
  json proj = json::array();
  for (const ProjectionRecord& p : sol.projections)
    proj.push_back({{"transition", p.transition},
                    {"side", to_string(p.side)},
                    {"epsilon", p.epsilon},
                    {"equilibration_error", p.equilibration_error},
                    {"drift_error", p.drift_error},
                    {"spread", p.spread}});
  o.report.diagnostics["projections"] = proj;
}

HeatOptions heat_options(const Flags& f) {
  HeatOptions h;
  if (f.tol) h.rtol = *f.tol;
  if (f.samples) h.samples_per_interval = std::max(2, *f.samples);
  else h.samples_per_interval = 33;
  return h;
}

Outcome run_command(const std::string& command, const Flags& f) {
  Outcome o;
  RunReport& r = o.report;
  r.command = command;
  r.seed = f.seed;
  r.threads = worker_count(f.threads);

  if (f.scenario.empty()) throw contract_error("--scenario is required");

  if (command == "validate") {
    // Parse without throwing on validation errors so that all are listed.
    ScenarioDocument doc = [&] {
      const std::string prefix = "builtin:";
      if (f.scenario.rfind(prefix, 0) == 0 || !std::filesystem::exists(f.scenario))
        return load_scenario(f.scenario);
      std::ifstream in(f.scenario);
      if (!in) throw io_error("cannot open scenario file '" + f.scenario + "'");
      json j;
      try {
        j = json::parse(in);
      } catch (const json::parse_error& e) {
        throw schema_error(std::vector<SchemaIssue>{{"", std::string("not valid JSON: ") + e.what()}});
      }
      return scenario_from_json(j);
    }();
    r.scenario = doc.flow.name();
    r.digest = scenario_digest(doc.flow);
    const ValidationReport v = validate_flow(doc.flow);
    json issues = json::array();
    for (const ValidationIssue& i : v.issues)
      issues.push_back({{"severity", i.severity == Severity::error ? "error" : "warning"},
                        {"condition", i.condition},
                        {"location", i.location},
                        {"message", i.message}});
    r.results["errors"] = v.error_count();
    r.results["warnings"] = v.warning_count();
    r.results["issues"] = issues;
    r.exit_code = v.ok() ? exit_pass : exit_input_error;
    return o;
  }

  const ScenarioDocument doc = load_scenario(f.scenario);
  const SingularFlow& flow = doc.flow;
  r.scenario = flow.name();
  r.digest = scenario_digest(flow);

  if (command == "export") {
    o.scenario = scenario_to_json(doc);
    r.results["intervals"] = flow.num_intervals();
    r.results["transitions"] = static_cast<int>(flow.transitions().size());
    return o;
  }

  if (command == "heat" || command == "dual-heat") {
    const bool dual = command == "dual-heat";
    const HeatOptions h = heat_options(f);
    r.tolerances = {{"rtol", h.rtol}, {"atol", h.atol}, {"projection", h.projection_tolerance}};
    const Vector start = dual ? resolve_vector(f.sigma, doc, f.to, true)
                              : resolve_vector(f.psi, doc, f.from, false);
    const HeatSolution sol = dual ? propagate_dual(flow, f.from, f.to, start, h)
                                  : propagate(flow, f.from, f.to, start, h);
    r.results["from"] = f.from;
    r.results["to"] = f.to;
    r.results["initial"] = named_values(flow.states_at(dual ? f.to : f.from), sol.initial);
    r.results["result"] = named_values(sol.result_states, sol.result);
    if (dual) {
      r.results["initial_mass"] = sol.initial.sum();
      r.results["final_mass"] = sol.result.sum();
    }
    add_trajectory(o, flow, sol, dual);
    o.table_name = "trajectory.csv";
    return o;
  }

  if (command == "wdist" || command == "geodesic") {
    TransportOptions t;
    if (f.tol) t.tolerance = *f.tol;
    const int K = f.grid.value_or(64);
    r.tolerances = {{"newton", t.tolerance}, {"feasibility", t.feasibility_tolerance}};
    const MarkovTriple triple = eval_at(flow, f.time).triple;
    const Measure mu = resolve_vector(f.mu, doc, f.time, true);
    const Measure nu = resolve_vector(f.nu, doc, f.time, true);
    r.results["time"] = f.time;
    r.results["grid"] = K;
    if (command == "wdist") {
      const PrimalResult p = primal_w2(triple, mu, nu, K, t);
      const DualResult d = dual_w2_lower(triple, mu, nu, K, t);
      r.results["primal"] = p.value;
      r.results["dual"] = d.value;
      r.results["relative_gap"] = p.value > 0.0 ? (p.value - d.value) / p.value : 0.0;
      r.diagnostics["newton_iterations"] = p.iterations;
      r.diagnostics["newton_decrement"] = p.decrement;
      r.diagnostics["continuity_residual"] = p.continuity_residual;
      r.diagnostics["dual_max_violation"] = d.witness.max_violation;
    } else {
      const GeodesicResult g = geodesic(triple, mu, nu, K, t);
      r.results["value"] = g.value;
      r.results["speed_deviation"] = g.speed_deviation;
      r.results["mixed"] = g.mixed;
      const std::vector<std::string>& states = triple.states();
      for (int k = 0; k <= g.path.K; ++k)
        for (size_t x = 0; x < states.size(); ++x)
          o.table.push_back({static_cast<double>(k) / g.path.K, states[x],
                             g.path.mu[static_cast<size_t>(k)](static_cast<Eigen::Index>(x))});
      o.table_time_column = "a";
      o.table_name = "geodesic.csv";
    }
    return o;
  }

  VerifyOptions v = verify_options(f);
  VerificationReport result;
  if (command == "bochner") {
    if (f.tol) v.bochner_tolerance = *f.tol;
    if (f.samples) v.bochner_times = *f.samples;
    result = check_bochner(flow, v);
  } else if (command == "poincare") {
    if (f.tol) v.poincare_tolerance = *f.tol;
    if (f.samples) v.poincare_samples = *f.samples;
    result = check_reverse_poincare(flow, v);
  } else if (command == "verify") {
    if (f.tol) v.bochner_tolerance = v.gradient_tolerance = v.poincare_tolerance = *f.tol;
    if (f.samples) {
      v.gradient_samples = v.poincare_samples = *f.samples;
      v.transport_samples = std::max(2, *f.samples / 5);
    }
    result = verify_srf(flow, v);
  } else {
    throw contract_error("unknown command '" + command + "'");
  }
  r.tolerances = tolerance_json(v);
  r.reports.push_back(result);
  r.exit_code = verdict_code(result.verdict);
  return o;
}

void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write '" + path.string() + "'");
  body(out);
  if (!out) throw io_error("failed writing '" + path.string() + "'");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Heat flow on singular time-dependent graphs and super-Ricci-flow checks", "srf"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* c) {
    c->add_option("--scenario", f.scenario, "Scenario file, builtin:NAME, or a builtin name")->required();
    c->add_option("--seed", f.seed, "Random seed");
    c->add_option("--tol", f.tol, "Tolerance of the command (see README)");
    c->add_option("--grid", f.grid, "Transport grid size K")->check(CLI::Range(1, 4096));
    c->add_option("--samples", f.samples, "Sample budget (or trajectory samples per interval)")
        ->check(CLI::PositiveNumber);
    c->add_option("--out", f.out_dir, "Directory for the report and tables");
    c->add_option("--format", f.format, "Output format on stdout")
        ->check(CLI::IsMember({"json", "text", "csv"}));
    c->add_option("--threads", f.threads, "Worker threads (1 is bit-exact; default SRF_THREADS)")
        ->check(CLI::NonNegativeNumber);
    c->add_flag("--timing", f.timing, "Record wall-clock time in the report");
  };
  struct Spec {
    const char* name;
    const char* help;
  };
  const std::vector<Spec> specs = {
      {"validate", "Check a scenario against the singular-flow conditions"},
      {"heat", "Propagate a function forward (P_{t,s}psi)"},
      {"dual-heat", "Propagate a measure backward (dual heat flow)"},
      {"wdist", "Primal and certified dual transport distance at a time"},
      {"geodesic", "Constant-speed transport geodesic at a time"},
      {"bochner", "Dynamic Bochner inequality check"},
      {"verify", "All super-Ricci-flow criteria and the reverse Poincare inequality"},
      {"poincare", "Reverse Poincare inequality check"},
      {"export", "Write a scenario as JSON"},
  };
  std::string command;
  for (const Spec& s : specs) {
    CLI::App* c = app.add_subcommand(s.name, s.help);
    common(c);
    const std::string name = s.name;
    if (name == "heat" || name == "dual-heat") {
      c->add_option("--from", f.from, "Start time s")->required();
      c->add_option("--to", f.to, "End time t")->required();
      if (name == "heat")
        c->add_option("--psi", f.psi, "Function on X_s: delta:V, const:C, values:a,b,.. or a probe");
      else
        c->add_option("--sigma", f.sigma, "Measure on X_t: delta:V, uniform, pi, values:.. or a probe");
    }
    if (name == "wdist" || name == "geodesic") {
      c->add_option("--time", f.time, "Time t of the triple")->required();
      c->add_option("--mu", f.mu, "First measure")->required();
      c->add_option("--nu", f.nu, "Second measure")->required();
    }
    c->callback([&command, name] { command = name; });
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_pass;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return exit_pass;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return exit_input_error;
  }

  try {
    const auto started = std::chrono::steady_clock::now();
    Outcome o = run_command(command, f);
    if (f.timing)
      o.report.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    if (!f.out_dir.empty()) {
      const std::filesystem::path dir(f.out_dir);
      std::filesystem::create_directories(dir);
      write_file(dir / "report.json", [&](std::ostream& os) { os << to_json(o.report).dump(2) << "\n"; });
      if (!o.table.empty())
        write_file(dir / o.table_name,
                   [&](std::ostream& os) { write_table_csv(os, o.table, o.table_time_column); });
      if (o.scenario)
        write_file(dir / ((o.report.scenario.empty() ? "scenario" : o.report.scenario) + ".json"),
                   [&](std::ostream& os) { os << o.scenario->dump(2) << "\n"; });
    }
    if (o.scenario && f.out_dir.empty()) {
      out << o.scenario->dump(2) << "\n";  // export without --out prints the scenario
    } else if (f.format == "json") {
      out << to_json(o.report).dump(2) << "\n";
    } else if (f.format == "csv") {
      if (!o.table.empty())
        write_table_csv(out, o.table, o.table_time_column);
      else
        write_report_csv(out, o.report);
    } else {
      write_text(out, o.report);
    }
    return o.report.exit_code;
  } catch (const numerical_failure& e) {
    err << "numerical failure: " << e.what() << "\n";
    return exit_numerical_failure;
  } catch (const validation_error& e) {
    err << "validation error: " << e.what() << "\n";
    return exit_input_error;
  } catch (const schema_error& e) {
    err << e.what() << "\n";
    return exit_input_error;
  } catch (const contract_error& e) {
    err << "input error: " << e.what() << "\n";
    return exit_input_error;
  } catch (const io_error& e) {
    err << "I/O error: " << e.what() << "\n";
    return exit_input_error;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "I/O error: " << e.what() << "\n";
    return exit_input_error;
  } catch (const std::domain_error& e) {
    err << "input error: " << e.what() << "\n";
    return exit_input_error;
  }
}

}  // namespace srf
