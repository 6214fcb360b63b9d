#pragma once

// Run reports of the command-line tool: what was run, on which scenario
// (by digest), with which seed and tolerances, the verification reports and
// command results, and solver diagnostics. Rendered as JSON (machine) or as
// aligned text (human); trajectories and paths are written as CSV tables.

#include "srf/curvature.hpp"

#include "json.hpp"

#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace srf {

struct RunReport {
  std::string command;
  std::string scenario;
  std::string digest;
  std::uint64_t seed = 0;
  int threads = 1;
  nlohmann::json tolerances = nlohmann::json::object();
  std::vector<VerificationReport> reports;
  nlohmann::json results = nlohmann::json::object();
  nlohmann::json diagnostics = nlohmann::json::object();
  /// Wall-clock seconds; only recorded on request so that reports of
  /// identical single-threaded runs are byte-identical.
  std::optional<double> seconds;
  int exit_code = 0;
};

nlohmann::json to_json(const Witness& w);
nlohmann::json to_json(const VerificationReport& r);
nlohmann::json to_json(const RunReport& r);

/// Aligned human-readable rendering.
void write_text(std::ostream& os, const RunReport& r);

/// One CSV row per verification report (criterion, verdict, margin, ...).
void write_report_csv(std::ostream& os, const RunReport& r);

/// Rows of a trajectory table: time, vertex id, value.
struct TableRow {
  double time = 0.0;
  std::string vertex;
  double value = 0.0;
};

/// CSV with header "time,vertex,value" (or a custom first column name), at
/// full double precision.
void write_table_csv(std::ostream& os, const std::vector<TableRow>& rows,
                     const std::string& time_column = "time");

}  // namespace srf
