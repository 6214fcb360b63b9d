#include "srf/scenario_io.hpp"

#include "srf/errors.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace srf {

using nlohmann::json;

namespace {

std::string describe(const std::vector<SchemaIssue>& issues) {
  std::ostringstream os;
  os << "scenario schema: " << issues.size() << " problem(s)";
  for (const SchemaIssue& i : issues) os << "\n  " << (i.location.empty() ? "/" : i.location) << ": " << i.message;
  return os.str();
}

// ---------------------------------------------------------------------------
// Writing.

json rate_to_json(const RateSchedule& r) {
  const RateParams& p = r.params();
  json j = {{"kind", to_string(r.kind())}};
  switch (r.kind()) {
    case RateKind::constant:
      j["c"] = p.c;
      break;
    case RateKind::affine:
      j["a"] = p.a;
      j["b"] = p.b;
      break;
    case RateKind::soliton_scaled:
      j["c"] = p.c;
      j["kappa"] = p.kappa;
      j["t_ref"] = p.t_ref;
      j["scale"] = p.scale;
      break;
    case RateKind::collapse_pole:
    case RateKind::spawn_pole:
      j["c"] = p.c;
      j["t_pole"] = p.t_pole;
      j["order"] = p.order;
      break;
    case RateKind::tabulated:
      j["times"] = p.times;
      j["values"] = p.values;
      break;
  }
  return j;
}

json pi_to_json(const PiSchedule& s) {
  json j = {{"kind", to_string(s.kind())}};
  switch (s.kind()) {
    case PiKind::constant:
      j["value"] = s.coefficients().at(0);
      break;
    case PiKind::affine:
      j["a"] = s.coefficients().at(0);
      j["b"] = s.coefficients().at(1);
      break;
    case PiKind::polynomial:
      j["coefficients"] = s.coefficients();
      break;
    case PiKind::tabulated:
      j["times"] = s.times();
      j["values"] = s.values();
      break;
  }
  return j;
}

json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json map_to_json(const std::vector<int>& map, const std::vector<std::string>& boundary) {
  json out = json::array();
  for (int m : map) out.push_back(boundary.at(static_cast<size_t>(m)));
  return out;
}

// ---------------------------------------------------------------------------
// Reading: every accessor records a problem and returns a fallback, so one
// pass reports all schema violations.

class Reader {
 public:
  std::vector<SchemaIssue> issues;

  void fail(const std::string& at, const std::string& message) { issues.push_back({at, message}); }

  const json* field(const json& obj, const std::string& at, const std::string& key,
                    bool required = true) {
    if (!obj.is_object()) {
      fail(at, "expected an object");
      return nullptr;
    }
    const auto it = obj.find(key);
    if (it == obj.end()) {
      if (required) fail(at + "/" + key, "missing");
      return nullptr;
    }
    return &*it;
  }

  double number(const json& obj, const std::string& at, const std::string& key,
                std::optional<double> fallback = std::nullopt) {
    const json* v = field(obj, at, key, !fallback.has_value());
    if (!v) return fallback.value_or(0.0);
    if (!v->is_number()) {
      fail(at + "/" + key, "expected a number");
      return 0.0;
    }
    return v->get<double>();
  }

  std::string text(const json& obj, const std::string& at, const std::string& key,
                   std::optional<std::string> fallback = std::nullopt) {
    const json* v = field(obj, at, key, !fallback.has_value());
    if (!v) return fallback.value_or("");
    if (!v->is_string()) {
      fail(at + "/" + key, "expected a string");
      return "";
    }
    return v->get<std::string>();
  }

  std::vector<double> numbers(const json& v, const std::string& at) {
    std::vector<double> out;
    if (!v.is_array()) {
      fail(at, "expected an array of numbers");
      return out;
    }
    for (size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) {
        fail(at + "/" + std::to_string(i), "expected a number");
        out.push_back(0.0);
      } else {
        out.push_back(v[i].get<double>());
      }
    }
    return out;
  }

  std::vector<double> numbers(const json& obj, const std::string& at, const std::string& key) {
    const json* v = field(obj, at, key);
    return v ? numbers(*v, at + "/" + key) : std::vector<double>{};
  }

  std::vector<std::string> names(const json& obj, const std::string& at, const std::string& key,
                                 bool required = true) {
    std::vector<std::string> out;
    const json* v = field(obj, at, key, required);
    if (!v) return out;
    if (!v->is_array()) {
      fail(at + "/" + key, "expected an array of strings");
      return out;
    }
    for (size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_string())
        fail(at + "/" + key + "/" + std::to_string(i), "expected a string");
      else
        out.push_back((*v)[i].get<std::string>());
    }
    return out;
  }

  int index(const std::vector<std::string>& states, const std::string& name, const std::string& at) {
    for (size_t i = 0; i < states.size(); ++i)
      if (states[i] == name) return static_cast<int>(i);
    fail(at, "unknown state '" + name + "'");
    return -1;
  }

  // Runs a constructor that may throw contract_error and records its message.
  template <class F>
  auto guarded(const std::string& at, F&& make) -> std::optional<decltype(make())> {
    try {
      return make();
    } catch (const contract_error& e) {
      fail(at, e.what());
      return std::nullopt;
    }
  }
};

std::optional<RateSchedule> read_rate(Reader& r, const json& j, const std::string& at) {
  const std::string kind_name = r.text(j, at, "kind");
  const std::optional<RateKind> kind = rate_kind_from_string(kind_name);
  if (!kind) {
    if (!kind_name.empty()) r.fail(at + "/kind", "unknown rate schedule kind '" + kind_name + "'");
    return std::nullopt;
  }
  switch (*kind) {
    case RateKind::constant: {
      const double c = r.number(j, at, "c");
      return r.guarded(at, [&] { return RateSchedule::constant(c); });
    }
    case RateKind::affine: {
      const double a = r.number(j, at, "a"), b = r.number(j, at, "b");
      return r.guarded(at, [&] { return RateSchedule::affine(a, b); });
    }
    case RateKind::soliton_scaled: {
      const double c = r.number(j, at, "c"), kappa = r.number(j, at, "kappa");
      const double t_ref = r.number(j, at, "t_ref", 0.0), scale = r.number(j, at, "scale", 1.0);
      return r.guarded(at, [&] { return RateSchedule::soliton_scaled(c, kappa, t_ref, scale); });
    }
    case RateKind::collapse_pole:
    case RateKind::spawn_pole: {
      const double c = r.number(j, at, "c"), t_pole = r.number(j, at, "t_pole");
      const double order = r.number(j, at, "order", 1.0);
      return r.guarded(at, [&] {
        return *kind == RateKind::collapse_pole ? RateSchedule::collapse_pole(c, t_pole, order)
                                                : RateSchedule::spawn_pole(c, t_pole, order);
      });
    }
    case RateKind::tabulated: {
      std::vector<double> times = r.numbers(j, at, "times"), values = r.numbers(j, at, "values");
      return r.guarded(at, [&] { return RateSchedule::tabulated(times, values); });
    }
  }
  return std::nullopt;
}

std::optional<PiSchedule> read_pi(Reader& r, const json& j, const std::string& at) {
  if (j.is_number()) return PiSchedule::constant(j.get<double>());
  const std::string kind = r.text(j, at, "kind");
  if (kind == "constant") return PiSchedule::constant(r.number(j, at, "value"));
  if (kind == "affine") return PiSchedule::affine(r.number(j, at, "a"), r.number(j, at, "b"));
  if (kind == "polynomial") {
    std::vector<double> c = r.numbers(j, at, "coefficients");
    return r.guarded(at, [&] { return PiSchedule::polynomial(c); });
  }
  if (kind == "tabulated") {
    std::vector<double> times = r.numbers(j, at, "times"), values = r.numbers(j, at, "values");
    return r.guarded(at, [&] { return PiSchedule::tabulated(times, values); });
  }
  if (!kind.empty()) r.fail(at + "/kind", "unknown pi schedule kind '" + kind + "'");
  return std::nullopt;
}

IntervalSpec read_interval(Reader& r, const json& j, const std::string& at) {
  IntervalSpec iv;
  iv.t_start = r.number(j, at, "start");
  iv.t_end = r.number(j, at, "end");
  iv.states = r.names(j, at, "states");
  if (const json* edges = r.field(j, at, "edges")) {
    if (!edges->is_array()) r.fail(at + "/edges", "expected an array");
    for (size_t e = 0; edges->is_array() && e < edges->size(); ++e) {
      const std::string eat = at + "/edges/" + std::to_string(e);
      const json& ej = (*edges)[e];
      const int from = r.index(iv.states, r.text(ej, eat, "from"), eat + "/from");
      const int to = r.index(iv.states, r.text(ej, eat, "to"), eat + "/to");
      const json* rate = r.field(ej, eat, "rate");
      std::optional<RateSchedule> sched = rate ? read_rate(r, *rate, eat + "/rate") : std::nullopt;
      if (from >= 0 && to >= 0 && sched) iv.edges.push_back({from, to, *sched});
    }
  }
  if (const json* pi = r.field(j, at, "pi")) {
    if (!pi->is_array() || pi->size() != iv.states.size()) {
      r.fail(at + "/pi", "expected one pi schedule per state");
    } else {
      for (size_t x = 0; x < pi->size(); ++x)
        if (auto s = read_pi(r, (*pi)[x], at + "/pi/" + std::to_string(x))) iv.pi.push_back(*s);
    }
  }
  return iv;
}

std::vector<int> read_map(Reader& r, const json& j, const std::string& at, const std::string& key,
                          const std::vector<std::string>& boundary) {
  std::vector<int> map;
  for (const std::string& name : r.names(j, at, key, false))
    map.push_back(r.index(boundary, name, at + "/" + key));
  return map;
}

}  // namespace

schema_error::schema_error(std::vector<SchemaIssue> issues)
    : contract_error(describe(issues)), issues_(std::move(issues)) {}

json scenario_to_json(const SingularFlow& flow) {
  ScenarioDocument doc{1, flow, {}, {}};
  return scenario_to_json(doc);
}

json scenario_to_json(const ScenarioDocument& doc) {
  const SingularFlow& flow = doc.flow;
  json out;
  out["schema"] = doc.schema;
  out["name"] = flow.name();
  json intervals = json::array();
  for (const IntervalSpec& iv : flow.intervals()) {
    json j;
    j["start"] = iv.t_start;
    j["end"] = iv.t_end;
    j["states"] = iv.states;
    json edges = json::array();
    for (const EdgeSchedule& e : iv.edges)
      edges.push_back({{"from", iv.states.at(static_cast<size_t>(e.from))},
                       {"to", iv.states.at(static_cast<size_t>(e.to))},
                       {"rate", rate_to_json(e.schedule)}});
    j["edges"] = edges;
    json pi = json::array();
    for (const PiSchedule& s : iv.pi) pi.push_back(pi_to_json(s));
    j["pi"] = pi;
    intervals.push_back(j);
  }
  out["intervals"] = intervals;
  json transitions = json::array();
  for (int i = 0; i < static_cast<int>(flow.transitions().size()); ++i) {
    const SingularTransition& tr = flow.transition(i);
    json j;
    j["time"] = tr.time;
    j["states"] = tr.states;
    if (!tr.collapse_map.empty()) j["collapse"] = map_to_json(tr.collapse_map, tr.states);
    if (!tr.spawn_map.empty()) j["spawn"] = map_to_json(tr.spawn_map, tr.states);
    json rates = json::array();
    for (int x = 0; x < tr.rates.rows(); ++x)
      for (int y = 0; y < tr.rates.cols(); ++y)
        if (x != y && tr.rates(x, y) != 0.0)
          rates.push_back({{"from", tr.states.at(static_cast<size_t>(x))},
                           {"to", tr.states.at(static_cast<size_t>(y))},
                           {"value", tr.rates(x, y)}});
    j["rates"] = rates;
    j["pi"] = vector_to_json(tr.pi);
    transitions.push_back(j);
  }
  out["transitions"] = transitions;
  if (!doc.measures.empty() || !doc.potentials.empty()) {
    json probes;
    for (const auto& [name, v] : doc.measures) probes["measures"][name] = vector_to_json(v);
    for (const auto& [name, v] : doc.potentials) probes["potentials"][name] = vector_to_json(v);
    out["probes"] = probes;
  }
  return out;
}

ScenarioDocument scenario_from_json(const json& doc) {
  Reader r;
  if (!doc.is_object()) throw schema_error(std::vector<SchemaIssue>{{"", "expected a JSON object"}});
  const int schema = static_cast<int>(r.number(doc, "", "schema", 1.0));
  if (schema != 1) r.fail("/schema", "unsupported schema version " + std::to_string(schema));
  const std::string name = r.text(doc, "", "name", std::string());

  std::vector<IntervalSpec> intervals;
  if (const json* ivs = r.field(doc, "", "intervals")) {
    if (!ivs->is_array() || ivs->empty()) r.fail("/intervals", "expected a non-empty array");
    for (size_t i = 0; ivs->is_array() && i < ivs->size(); ++i)
      intervals.push_back(read_interval(r, (*ivs)[i], "/intervals/" + std::to_string(i)));
  }

  std::vector<SingularTransition> transitions;
  if (const json* trs = r.field(doc, "", "transitions")) {
    if (!trs->is_array() || trs->size() != intervals.size() + 1)
      r.fail("/transitions", "expected one transition per interval endpoint (" +
                                 std::to_string(intervals.size() + 1) + ")");
    for (size_t i = 0; trs->is_array() && i < trs->size(); ++i) {
      const std::string at = "/transitions/" + std::to_string(i);
      const json& j = (*trs)[i];
      const double time = r.number(j, at, "time");
      std::vector<std::string> states = r.names(j, at, "states");
      std::vector<int> collapse = read_map(r, j, at, "collapse", states);
      std::vector<int> spawn = read_map(r, j, at, "spawn", states);
      const bool declared = j.is_object() && (j.contains("rates") || j.contains("pi"));
      if (!declared) {
        const IntervalSpec* prev = i > 0 && i - 1 < intervals.size() ? &intervals[i - 1] : nullptr;
        const IntervalSpec* next = i < intervals.size() ? &intervals[i] : nullptr;
        if (auto tr = r.guarded(at, [&] {
              return make_transition(time, states, collapse, spawn, prev, next);
            }))
          transitions.push_back(*tr);
        continue;
      }
      SingularTransition tr;
      tr.time = time;
      tr.states = states;
      tr.collapse_map = collapse;
      tr.spawn_map = spawn;
      const int n = static_cast<int>(states.size());
      tr.rates = Matrix::Zero(n, n);
      if (const json* rates = r.field(j, at, "rates")) {
        if (!rates->is_array()) r.fail(at + "/rates", "expected an array");
        for (size_t e = 0; rates->is_array() && e < rates->size(); ++e) {
          const std::string eat = at + "/rates/" + std::to_string(e);
          const json& ej = (*rates)[e];
          const int x = r.index(states, r.text(ej, eat, "from"), eat + "/from");
          const int y = r.index(states, r.text(ej, eat, "to"), eat + "/to");
          const double v = r.number(ej, eat, "value");
          if (x >= 0 && y >= 0) tr.rates(x, y) = v;
        }
      }
      const std::vector<double> pi = r.numbers(j, at, "pi");
      if (pi.size() != states.size())
        r.fail(at + "/pi", "expected one weight per boundary state");
      else
        tr.pi = Eigen::Map<const Vector>(pi.data(), n);
      transitions.push_back(tr);
    }
  }

  std::map<std::string, Vector> measures, potentials;
  if (const json* probes = r.field(doc, "", "probes", false)) {
    for (const char* kind : {"measures", "potentials"}) {
      const json* group = r.field(*probes, "/probes", kind, false);
      if (!group) continue;
      if (!group->is_object()) {
        r.fail(std::string("/probes/") + kind, "expected an object");
        continue;
      }
      for (const auto& [key, value] : group->items()) {
        const std::vector<double> v = r.numbers(value, std::string("/probes/") + kind + "/" + key);
        (std::string(kind) == "measures" ? measures : potentials)[key] =
            Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
      }
    }
  }

  if (!r.issues.empty()) throw schema_error(r.issues);
  try {
    return ScenarioDocument{schema, SingularFlow(std::move(intervals), std::move(transitions), name),
                            std::move(measures), std::move(potentials)};
  } catch (const contract_error& e) {
    throw schema_error(std::vector<SchemaIssue>{{"", e.what()}});
  }
}

ScenarioDocument parse_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open scenario file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw schema_error(std::vector<SchemaIssue>{{"", std::string("not valid JSON: ") + e.what()}});
  }
  ScenarioDocument out = scenario_from_json(doc);
  const ValidationReport report = validate_flow(out.flow);
  if (!report.ok())
    throw validation_error("scenario '" + path + "' failed validation: " + report.summary());
  return out;
}

ScenarioDocument load_scenario(const std::string& spec) {
  const std::string prefix = "builtin:";
  if (spec.rfind(prefix, 0) == 0) return ScenarioDocument{1, builtin_scenario(spec.substr(prefix.size())), {}, {}};
  if (!std::filesystem::exists(spec)) {
    for (const std::string& name : builtin_names())
      if (name == spec) return ScenarioDocument{1, builtin_scenario(spec), {}, {}};
  }
  return parse_scenario(spec);
}

void write_scenario(const std::string& path, const ScenarioDocument& doc) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write scenario file '" + path + "'");
  out << scenario_to_json(doc).dump(2) << "\n";
  if (!out) throw io_error("failed writing scenario file '" + path + "'");
}

std::string scenario_digest(const SingularFlow& flow) {
  const std::string canonical = scenario_to_json(flow).dump();
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace srf
