#include "srf/report.hpp"

#include <cstdio>
#include <iomanip>
#include <sstream>

namespace srf {

using nlohmann::json;

namespace {

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6e", v);
  return buf;
}

// %.17g keeps every bit of a double in the table.
std::string exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void text_value(std::ostream& os, const std::string& key, const json& v, int width) {
  os << "  " << std::left << std::setw(width) << key << " ";
  if (v.is_string())
    os << v.get<std::string>();
  else
    os << v.dump();
  os << "\n";
}

void text_block(std::ostream& os, const std::string& title, const json& obj) {
  if (!obj.is_object() || obj.empty()) return;
  size_t width = 0;
  for (const auto& [k, v] : obj.items()) width = std::max(width, k.size());
  os << title << ":\n";
  for (const auto& [k, v] : obj.items()) text_value(os, k, v, static_cast<int>(width));
}

}  // namespace

json to_json(const Witness& w) {
  json j;
  j["times"] = w.times;
  if (w.mu.size() > 0) j["mu"] = vector_json(w.mu);
  if (w.nu.size() > 0) j["nu"] = vector_json(w.nu);
  if (w.psi.size() > 0) j["psi"] = vector_json(w.psi);
  return j;
}

json to_json(const VerificationReport& r) {
  json j;
  j["criterion"] = to_string(r.criterion);
  j["verdict"] = to_string(r.verdict);
  j["margin"] = r.margin;
  j["tolerance"] = r.tolerance;
  j["samples"] = r.samples;
  j["inconclusive_samples"] = r.inconclusive_samples;
  j["witness"] = r.witness ? to_json(*r.witness) : json(nullptr);
  j["notes"] = r.notes;
  if (r.criterion == Criterion::aggregate) {
    j["consistent"] = r.consistent;
    json parts = json::array();
    for (const VerificationReport& p : r.parts) parts.push_back(to_json(p));
    j["parts"] = parts;
  }
  return j;
}

json to_json(const RunReport& r) {
  json j;
  j["command"] = r.command;
  j["scenario"] = {{"name", r.scenario}, {"digest", r.digest}};
  j["seed"] = r.seed;
  j["threads"] = r.threads;
  j["tolerances"] = r.tolerances;
  json reports = json::array();
  for (const VerificationReport& v : r.reports) reports.push_back(to_json(v));
  j["reports"] = reports;
  j["results"] = r.results;
  j["diagnostics"] = r.diagnostics;
  if (r.seconds) j["timing"] = {{"seconds", *r.seconds}};
  j["exit_code"] = r.exit_code;
  return j;
}

void write_text(std::ostream& os, const RunReport& r) {
  os << "command   " << r.command << "\n";
  os << "scenario  " << r.scenario << " (digest " << r.digest << ")\n";
  os << "seed      " << r.seed << "\n";
  os << "threads   " << r.threads << "\n";
  if (r.seconds) os << "seconds   " << std::fixed << std::setprecision(3) << *r.seconds << std::defaultfloat << "\n";
  text_block(os, "tolerances", r.tolerances);

  std::vector<const VerificationReport*> rows;
  for (const VerificationReport& v : r.reports) {
    if (v.criterion == Criterion::aggregate)
      for (const VerificationReport& p : v.parts) rows.push_back(&p);
    rows.push_back(&v);
  }
  if (!rows.empty()) {
    os << std::left << std::setw(20) << "criterion" << std::setw(14) << "verdict" << std::right
       << std::setw(15) << "margin" << std::setw(15) << "tolerance" << std::setw(9) << "samples"
       << std::setw(14) << "inconclusive" << "\n";
    for (const VerificationReport* v : rows)
      os << std::left << std::setw(20) << to_string(v->criterion) << std::setw(14)
         << to_string(v->verdict) << std::right << std::setw(15) << sci(v->margin) << std::setw(15)
         << sci(v->tolerance) << std::setw(9) << v->samples << std::setw(14)
         << v->inconclusive_samples << "\n";
    for (const VerificationReport* v : rows) {
      if (v->criterion == Criterion::aggregate && !v->consistent)
        os << "warning: the criteria disagree; this signals a numerical tolerance issue\n";
      if (v->witness && v->verdict != Verdict::pass) {
        os << "witness (" << to_string(v->criterion) << "): " << to_json(*v->witness).dump() << "\n";
      }
      for (const std::string& n : v->notes) os << "note (" << to_string(v->criterion) << "): " << n << "\n";
    }
  }
  text_block(os, "results", r.results);
  text_block(os, "diagnostics", r.diagnostics);
  os << "exit code " << r.exit_code << "\n";
}

void write_report_csv(std::ostream& os, const RunReport& r) {
  os << "criterion,verdict,margin,tolerance,samples,inconclusive\n";
  auto row = [&](const VerificationReport& v) {
    os << to_string(v.criterion) << "," << to_string(v.verdict) << "," << exact(v.margin) << ","
       << exact(v.tolerance) << "," << v.samples << "," << v.inconclusive_samples << "\n";
  };
  for (const VerificationReport& v : r.reports) {
    for (const VerificationReport& p : v.parts) row(p);
    row(v);
  }
}

void write_table_csv(std::ostream& os, const std::vector<TableRow>& rows,
                     const std::string& time_column) {
  os << time_column << ",vertex,value\n";
  for (const TableRow& row : rows) os << exact(row.time) << "," << row.vertex << "," << exact(row.value) << "\n";
}

}  // namespace srf
