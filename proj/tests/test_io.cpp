#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "voltvar/error.hpp"
#include "voltvar/feeder_io.hpp"
#include "voltvar/metrics.hpp"
#include "voltvar/scenario_io.hpp"

using namespace voltvar;
using namespace voltvar::sim;
using nlohmann::json;

namespace {

const std::filesystem::path kData = VOLTVAR_DATA_DIR;

}  // namespace

TEST_CASE("scenario JSON round trip") {
  for (const std::string& name : preset_names()) {
    const json doc = scenario_to_json(scenario_from_json(preset_json(name)));
    CHECK(scenario_to_json(scenario_from_json(doc)) == doc);
    const Scenario s = scenario_from_json(doc);
    CHECK(s.name == name);
  }
}

TEST_CASE("scenario schema errors") {
  json doc = preset_json("fig3a");
  doc["bogus"] = 1;
  CHECK_THROWS_AS(scenario_from_json(doc), SchemaError);

  doc = preset_json("fig3a");
  doc["controller"]["kind"] = "pid";
  CHECK_THROWS_AS(scenario_from_json(doc), SchemaError);

  doc = preset_json("fig3a");
  doc["events"].push_back({{"tick", 3}, {"type", "earthquake"}});
  CHECK_THROWS_AS(scenario_from_json(doc), SchemaError);

  doc = preset_json("fig3a");
  doc["horizon"] = -5;
  CHECK_THROWS_AS(scenario_from_json(doc), SchemaError);
}

TEST_CASE("events are stably sorted by tick") {
  json doc = preset_json("fig3a");
  doc["events"] = json::array({{{"tick", 9}, {"type", "substation_voltage"}, {"value", 1.01}},
                               {{"tick", 2}, {"type", "substation_voltage"}, {"value", 1.02}},
                               {{"tick", 9}, {"type", "substation_voltage"}, {"value", 1.04}}});
  const Scenario s = scenario_from_json(doc);
  REQUIRE(s.events.size() == 3);
  CHECK(s.events[0].tick == 2);
  CHECK(std::get<SubstationVoltage>(s.events[1].kind).v == 1.01);
  CHECK(std::get<SubstationVoltage>(s.events[2].kind).v == 1.04);
}

TEST_CASE("overrides") {
  json doc = preset_json("fig10a");
  apply_override(doc, "controller.slope=2.5");
  apply_override(doc, "adaptive.k_d=3");
  apply_override(doc, "controller.kind=delayed");
  apply_override(doc, "settle_initial=false");
  const Scenario s = scenario_from_json(doc);
  CHECK(s.controller.slope == 2.5);
  CHECK(s.controller.adaptive.k_d == 3.0);
  CHECK(std::holds_alternative<control::Delayed>(s.controller.kind));
  CHECK_FALSE(s.settle_initial);

  CHECK_THROWS_AS(apply_override(doc, "controller.gain=1"), SchemaError);
  CHECK_THROWS_AS(apply_override(doc, "slope"), SchemaError);
  CHECK_THROWS_AS(apply_override(doc, "=1"), SchemaError);
}

TEST_CASE("scenario references resolve to presets or files") {
  CHECK(resolve_scenario_json("presets/fig3b") == preset_json("fig3b"));
  CHECK(resolve_scenario_json("fig3b") == preset_json("fig3b"));
  CHECK(resolve_scenario_json((kData / "presets" / "fig3b.json").string()) == preset_json("fig3b"));
  CHECK_THROWS_AS(resolve_scenario_json("/no/such/file.json"), IoError);
  CHECK_THROWS_AS(preset_json("fig99"), SchemaError);
}

TEST_CASE("trace CSV round trip reproduces the metrics exactly") {
  const Scenario s = scenario_from_json(preset_json("fig10c"));
  const FeederPlant plant(feeder::builtin_feeder(s.feeder));
  const SimulationTrace t = run(s, plant);
  std::stringstream csv;
  write_trace_csv(t, csv);
  const SimulationTrace back = read_trace_csv(csv, plant.pv_sites(), s.dt_inner, s.outer_period());
  CHECK(back.voltages == t.voltages);
  CHECK(back.q_inj == t.q_inj);
  CHECK(back.p_out == t.p_out);
  CHECK(back.flags == t.flags);
  CHECK(back.dispatch_residual == t.dispatch_residual);

  const auto mu = setpoint_schedule(s, t.pv_ids);
  const MetricsReport a = metrics(t, mu, limits_for(s));
  const MetricsReport b = metrics(back, mu, limits_for(s));
  CHECK(a.msse == b.msse);
  CHECK(a.fc == b.fc);
  CHECK(a.vvi == b.vvi);

  std::stringstream header;
  write_trace_csv(t, header);
  std::string first;
  std::getline(header, first);
  CHECK(first == "tick,bus,V_pu,q_inj_pu,p_out_pu,flags");

  std::stringstream broken("tick,bus,V_pu\n0,1,1.0\n");
  CHECK_THROWS_AS(read_trace_csv(broken, plant.pv_sites(), 1.0, 10), SchemaError);
}

TEST_CASE("params CSV and metrics JSON") {
  const Scenario s = scenario_from_json(preset_json("fig10a"));
  const SimulationTrace t = run(s, FeederPlant(feeder::builtin_feeder(s.feeder)));
  std::stringstream out;
  write_params_csv(t, out);
  std::string line;
  std::getline(out, line);
  CHECK(line.rfind("tick,unit,bus,m_p,q_p", 0) == 0);
  std::size_t rows = 0;
  while (std::getline(out, line)) ++rows;
  CHECK(rows == t.outer.size());

  const MetricsReport r = metrics(t, setpoint_schedule(s, t.pv_ids), limits_for(s));
  const json m = metrics_to_json(r, t);
  CHECK(m["msse_percent"].get<double>() == r.msse);
  CHECK(m["fc"].get<long>() == r.fc);
  CHECK(m["vvi"].get<long>() == r.vvi);
}

TEST_CASE("feeder JSON round trip") {
  for (const std::string& name : feeder::builtin_feeder_names()) {
    const feeder::FeederModel m = feeder::builtin_feeder(name);
    CHECK(feeder::feeder_from_json(feeder::feeder_to_json(m)) == m);
  }
  json doc = feeder::feeder_to_json(feeder::builtin_feeder("ieee4_mod"));
  doc["lines"][0]["switch"] = "ajar";
  CHECK_THROWS_AS(feeder::feeder_from_json(doc), SchemaError);
  CHECK_THROWS_AS(feeder::load_feeder("/no/such/feeder.json"), IoError);
}

TEST_CASE("bundled data files match the built-ins") {
  for (const std::string& name : feeder::builtin_feeder_names()) {
    CHECK(feeder::load_feeder(kData / "feeders" / (name + ".json")) == feeder::builtin_feeder(name));
    CHECK(feeder::resolve_feeder(name) == feeder::builtin_feeder(name));
  }
  for (const std::string& name : preset_names()) {
    CHECK(load_json_file(kData / "presets" / (name + ".json")) == preset_json(name));
  }
}
