#include "doctest.h"

#include "srf/cli.hpp"
#include "srf/heatflow.hpp"
#include "srf/scenario_io.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace srf;
using nlohmann::json;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Fresh scratch directory per test case.
std::filesystem::path scratch(const std::string& tag) {
  std::random_device rd;
  const auto dir = std::filesystem::temp_directory_path() /
                   ("srf_cli_" + tag + "_" + std::to_string(rd()));
  std::filesystem::create_directories(dir);
  return dir;
}

std::string write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream(path) << j.dump(2);
  return path.string();
}

}  // namespace

TEST_CASE("builtin scenarios round-trip through JSON") {
  for (const std::string& name : builtin_names()) {
    CAPTURE(name);
    const SingularFlow flow = builtin_scenario(name);
    const json j = scenario_to_json(flow);
    const ScenarioDocument back = scenario_from_json(json::parse(j.dump()));
    CHECK(scenario_to_json(back.flow) == j);
    CHECK(scenario_digest(back.flow) == scenario_digest(flow));
    for (double t : {0.013, 0.2, 0.37}) {
      if (t <= flow.t_start() || t >= flow.t_end() || flow.transition_at(t)) continue;
      const FlowPoint a = eval_at(flow, t), b = eval_at(back.flow, t);
      CHECK((a.triple.rates() - b.triple.rates()).cwiseAbs().maxCoeff() == 0.0);
      CHECK((a.triple.pi() - b.triple.pi()).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("probe vectors survive the round trip") {
  ScenarioDocument doc{1, builtin_scenario("two_point_soliton"), {}, {}};
  doc.measures["left"] = Vector::Unit(2, 0);
  doc.potentials["tilt"] = (Vector(2) << 1.0, -1.0).finished();
  const ScenarioDocument back = scenario_from_json(scenario_to_json(doc));
  CHECK(back.measures.at("left") == doc.measures.at("left"));
  CHECK(back.potentials.at("tilt") == doc.potentials.at("tilt"));
}

TEST_CASE("schema errors are listed with their locations") {
  json j = scenario_to_json(builtin_scenario("two_point_soliton"));
  j["intervals"][0]["edges"][0]["rate"]["kind"] = "warp_drive";
  j["intervals"][0]["states"][1] = 7;
  try {
    scenario_from_json(j);
    FAIL("expected a schema error");
  } catch (const schema_error& e) {
    bool kind = false, state = false;
    for (const SchemaIssue& i : e.issues()) {
      kind = kind || (i.location == "/intervals/0/edges/0/rate/kind" &&
                      i.message.find("warp_drive") != std::string::npos);
      state = state || i.location == "/intervals/0/states/1";
    }
    CHECK(kind);
    CHECK(state);
  }
  CHECK_THROWS_AS(scenario_from_json(json::array()), schema_error);
}

TEST_CASE("validation failures name the transition or edge") {
  const auto dir = scratch("validation");
  const json good = scenario_to_json(builtin_scenario("collapse_product"));

  json bad_pi = good;
  bad_pi["transitions"][1]["pi"] = {0.8, 0.2};
  const std::string pi_path = write_json(dir / "bad_pi.json", bad_pi);
  CHECK_THROWS_WITH_AS(parse_scenario(pi_path), doctest::Contains("transition 1"), validation_error);
  Run r = run({"verify", "--scenario", pi_path});
  CHECK(r.code == exit_input_error);
  CHECK(r.err.find("pi-aggregation") != std::string::npos);

  // Exploding rates whose time integral stays finite cannot collapse.
  json finite = good;
  for (json& e : finite["intervals"][0]["edges"])
    if (e["rate"]["kind"] == "soliton_scaled")
      e["rate"] = {{"kind", "collapse_pole"}, {"c", 0.5}, {"t_pole", 0.5}, {"order", 0.5}};
  const std::string finite_path = write_json(dir / "finite.json", finite);
  r = run({"validate", "--scenario", finite_path, "--format", "json"});
  CHECK(r.code == exit_input_error);
  bool divergence = false;
  const json validated = json::parse(r.out);
  for (const json& i : validated["results"]["issues"])
    divergence = divergence || (i["condition"] == "rate-divergence" &&
                                i["location"].get<std::string>().find("interval 0") != std::string::npos);
  CHECK(divergence);
  std::filesystem::remove_all(dir);
}

TEST_CASE("exit codes") {
  Run r = run({"verify", "--scenario", "two_point_soliton", "--seed", "7"});
  CHECK(r.code == exit_pass);

  r = run({"bochner", "--scenario", "supercritical_two_point", "--format", "json"});
  CHECK(r.code == exit_violation);
  const json report = json::parse(r.out);
  CHECK(report["reports"][0]["verdict"] == "violation");
  CHECK(report["reports"][0]["witness"]["times"].size() == 1);
  CHECK(report["reports"][0]["witness"]["psi"].size() == 2);

  CHECK(run({"verify", "--scenario", "no_such_file.json"}).code == exit_input_error);
  CHECK(run({"verify"}).code == exit_input_error);
  CHECK(run({"heat", "--scenario", "static", "--from", "0", "--to", "0.5", "--psi", "delta:nowhere"})
            .code == exit_input_error);

  // Tabulated rates have no analytic derivative: every Bochner sample is
  // inconclusive, which is reported as a numerical failure.
  const auto dir = scratch("codes");
  json tab = scenario_to_json(builtin_scenario("two_point_soliton"));
  for (json& e : tab["intervals"][0]["edges"])
    e["rate"] = {{"kind", "tabulated"}, {"times", {0.0, 0.25}}, {"values", {1.0, 1.0}}};
  tab["transitions"][1].erase("rates");
  tab["transitions"][1].erase("pi");
  tab["transitions"][1]["states"] = {"a", "b"};
  tab["transitions"][1]["collapse"] = {"a", "b"};
  const std::string path = write_json(dir / "tabulated.json", tab);
  r = run({"bochner", "--scenario", path, "--samples", "3"});
  CHECK(r.code == exit_numerical_failure);
  std::filesystem::remove_all(dir);
}

TEST_CASE("single-threaded reports are byte-identical") {
  const std::vector<std::string> args = {"poincare", "--scenario", "collapse_product", "--samples",
                                         "10", "--threads", "1", "--format", "json"};
  const Run a = run(args), b = run(args);
  CHECK(a.code == exit_pass);
  CHECK(a.out == b.out);
  CHECK(json::parse(a.out).count("timing") == 0);
  std::vector<std::string> timed = args;
  timed.push_back("--timing");
  CHECK(json::parse(run(timed).out)["timing"]["seconds"].get<double>() >= 0.0);
}

TEST_CASE("dual heat trajectory conserves mass across the collapse") {
  const auto dir = scratch("heat");
  const Run r = run({"dual-heat", "--scenario", "collapse_product", "--from", "0", "--to", "0.9",
                     "--sigma", "delta:v0", "--out", dir.string(), "--format", "json"});
  REQUIRE(r.code == exit_pass);
  std::ifstream in(dir / "trajectory.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "time,vertex,value");
  int rows = 0;
  double lo = 1e300, hi = -1e300;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string t, v, value;
    std::getline(ss, t, ',');
    std::getline(ss, v, ',');
    std::getline(ss, value, ',');
    if (v != "mass") continue;
    ++rows;
    lo = std::min(lo, std::stod(value));
    hi = std::max(hi, std::stod(value));
  }
  CHECK(rows > 10);
  CHECK(hi - lo <= 1e-10);
  CHECK(std::filesystem::exists(dir / "report.json"));

  const Run fwd = run({"heat", "--scenario", "collapse_product", "--from", "0", "--to", "0.9",
                       "--psi", "delta:v0", "--format", "csv"});
  CHECK(fwd.code == exit_pass);
  CHECK(fwd.out.rfind("time,vertex,value\n", 0) == 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("transport commands") {
  Run r = run({"wdist", "--scenario", "two_point_soliton", "--time", "0.1", "--mu", "values:0.9,0.1",
               "--nu", "values:0.2,0.8", "--format", "json"});
  REQUIRE(r.code == exit_pass);
  const json res = json::parse(r.out)["results"];
  CHECK(res["dual"].get<double>() <= res["primal"].get<double>() + 1e-12);
  CHECK(res["relative_gap"].get<double>() < 1e-3);

  r = run({"geodesic", "--scenario", "static", "--time", "0.5", "--mu", "delta:0", "--nu",
           "delta:3", "--grid", "8", "--format", "csv"});
  REQUIRE(r.code == exit_pass);
  CHECK(r.out.rfind("a,vertex,value\n", 0) == 0);
}

TEST_CASE("export writes a file that parses back to the same scenario") {
  const auto dir = scratch("export");
  REQUIRE(run({"export", "--scenario", "builtin:toy", "--out", dir.string()}).code == exit_pass);
  const ScenarioDocument doc = parse_scenario((dir / "toy.json").string());
  CHECK(scenario_digest(doc.flow) == scenario_digest(builtin_scenario("toy")));
  const Run v = run({"validate", "--scenario", (dir / "toy.json").string()});
  CHECK(v.code == exit_pass);
  std::filesystem::remove_all(dir);
}
