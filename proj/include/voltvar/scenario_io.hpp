#pragma once

// Scenario files, presets and trace output.
//
// Scenario JSON (every field optional unless noted):
//   {
//     "name": "fig3a", "feeder": "ieee4_mod",
//     "horizon": 160, "dt_inner": 1.0, "T_outer": 10, "seed": 1,
//     "settle_initial": false,
//     "controller": {"kind": "none"|"conventional"|"delayed"|"adaptive",
//                    "tau": 0.5, "mu": 1.0, "deadband": 0.0, "slope": 1.0,
//                    "track_capacity": true, "initial_slope_factor": 0.5},
//     "adaptive": {"k_d", "eps_sse", "eps_vf", "vf_lim", "vf_lim_bar",
//                  "delta_vf", "delta_vf_bar", "m_init", "m_floor",
//                  "signed_flicker"},
//     "pv_profile": {"<unit>": 0.8 | [multiplier per tick, ...]},
//     "series": {"<id>": {"dwell": 30, "low": 0.2, "high": 1.0}},
//     "events": [
//       {"tick": 80, "type": "substation_voltage", "value": 1.05},
//       {"tick": 80, "type": "setpoint", "mu": 0.96, "units": [...]},
//       {"tick": 80, "type": "cloud_cover", "scale": 0.2, "units": [...]},
//       {"tick": 0,  "type": "intermittency", "series": "<id>", "units": [...]},
//       {"tick": 80, "type": "switch", "line": "switch1", "state": "closed"},
//       {"tick": 80, "type": "load_scale", "factor": 1.2}]
//   }
// "T_outer" is the adaptive horizon T. Events are stably sorted by tick.
//
// Trace CSV: header `tick,bus,V_pu,q_inj_pu,p_out_pu,flags`, one row per tick
// and bus; q and p are summed over the bus's PV units; flags is the tick's
// TickFlag bitmask. Values are written with 17 significant digits so a trace
// reads back bit-identically.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "voltvar/metrics.hpp"
#include "voltvar/sim.hpp"

namespace voltvar::sim {

Scenario scenario_from_json(const nlohmann::json& doc);
nlohmann::json scenario_to_json(const Scenario& scenario);
nlohmann::json load_json_file(const std::filesystem::path& path);

// Keys accepted by apply_override, e.g. "controller.slope" or "adaptive.k_d".
const std::vector<std::string>& override_keys();

// Applies `key=value` to a scenario document. The value is parsed as JSON
// when possible (numbers, booleans), otherwise taken as a string. Throws
// SchemaError for unknown keys or malformed assignments.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// Built-in scenario presets.
std::vector<std::string> preset_names();
nlohmann::json preset_json(const std::string& name);

// "presets/<name>" or a bare preset name resolves to a preset; anything else
// is read as a JSON file.
nlohmann::json resolve_scenario_json(const std::string& ref);

void write_trace_csv(const SimulationTrace& trace, std::ostream& out);
void write_trace_csv(const SimulationTrace& trace, const std::filesystem::path& path);

// Reads a trace CSV. PV units and their buses come from `sites`; per-unit q
// and p are recovered exactly when each bus hosts at most one unit (otherwise
// the bus total goes to the first unit). dt_inner and the outer period come
// from the scenario.
SimulationTrace read_trace_csv(std::istream& in, const std::vector<PvSite>& sites,
                               double dt_inner, int outer_period);
SimulationTrace read_trace_csv(const std::filesystem::path& path, const std::vector<PvSite>& sites,
                               double dt_inner, int outer_period);

// Per outer loop and unit: tick,unit,bus,m_p,q_p,q_min_p,q_max_p,v_min_p,
// v_max_p,mu,sse_avg,vf,p_pv_avg.
void write_params_csv(const SimulationTrace& trace, std::ostream& out);

nlohmann::json metrics_to_json(const MetricsReport& report, const SimulationTrace& trace);
void print_metrics_table(const MetricsReport& report, const SimulationTrace& trace, std::ostream& out);

}  // namespace voltvar::sim
