#pragma once

// Scenario files: a JSON tree describing a singular flow (intervals with
// vertex lists, edge schedules tagged by "kind", π schedules, and singular
// transitions with collapse/spawn maps and declared boundary limits), plus
// optional named probe measures and potentials.
//
//   {
//     "schema": 1,
//     "name": "two_point_soliton",
//     "intervals": [
//       { "start": 0, "end": 0.25, "states": ["a", "b"],
//         "edges": [ { "from": "a", "to": "b",
//                      "rate": { "kind": "soliton_scaled", "c": 1, "kappa": 2 } } ],
//         "pi": [ { "kind": "constant", "value": 0.5 }, ... ] } ],
//     "transitions": [
//       { "time": 0, "states": ["a", "b"], "spawn": ["a", "b"],
//         "rates": [ { "from": "a", "to": "b", "value": 1 } ], "pi": [0.5, 0.5] },
//       ... ],
//     "probes": { "measures": { "name": [...] }, "potentials": { "name": [...] } }
//   }
//
// "collapse" / "spawn" list, for each state of the preceding / following
// interval, the boundary state it maps to. A transition without "rates" and
// "pi" gets the limits aggregated from its neighbouring interval.

#include "srf/errors.hpp"
#include "srf/schedule.hpp"

#include "json.hpp"

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace srf {

struct SchemaIssue {
  std::string location;  // JSON pointer, e.g. "/intervals/0/edges/2/rate"
  std::string message;
};

/// The document does not match the scenario schema.
class schema_error : public contract_error {
 public:
  explicit schema_error(std::vector<SchemaIssue> issues);
  const std::vector<SchemaIssue>& issues() const { return issues_; }

 private:
  std::vector<SchemaIssue> issues_;
};

/// A scenario file could not be read or written.
class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ScenarioDocument {
  int schema = 1;
  SingularFlow flow;
  std::map<std::string, Vector> measures;
  std::map<std::string, Vector> potentials;
};

nlohmann::json scenario_to_json(const SingularFlow& flow);
nlohmann::json scenario_to_json(const ScenarioDocument& doc);

/// Builds the flow without validating its data (structural contracts only).
/// Throws schema_error listing every problem found.
ScenarioDocument scenario_from_json(const nlohmann::json& doc);

/// Reads, parses and validates a scenario file. Throws io_error,
/// schema_error, or validation_error (whose message lists the failed
/// conditions with their locations).
ScenarioDocument parse_scenario(const std::string& path);

/// Same for a builtin ("builtin:NAME" or a bare builtin name) or a path.
ScenarioDocument load_scenario(const std::string& spec);

void write_scenario(const std::string& path, const ScenarioDocument& doc);

/// 64-bit FNV-1a digest of the canonical (compact, sorted-key) scenario JSON,
/// as 16 hex digits.
std::string scenario_digest(const SingularFlow& flow);

}  // namespace srf
