#pragma once

// JSON feeder description. Schema (all electrical quantities in pu on the
// system base, base_voltage in volts):
//
//   {
//     "name": "ieee4_mod",
//     "base_kva": 1000,
//     "buses":    [{"id", "kind": "slack"|"load", "base_voltage",
//                   "load_p", "load_q", "v_setpoint"}],
//     "lines":    [{"id", "from", "to", "resistance", "reactance",
//                   "switch": "closed"|"open"|"not-a-switch"}],
//     "pv_units": [{"id", "bus", "rating_s", "p_out", "q_inj"}]
//   }
//
// load_p, load_q, q_inj and v_setpoint default to 0, 0, 0 and 1; "switch"
// defaults to "not-a-switch".

#include <filesystem>
#include <string>

#include "json.hpp"
#include "voltvar/feeder.hpp"

namespace voltvar::feeder {

FeederModel feeder_from_json(const nlohmann::json& doc);
nlohmann::json feeder_to_json(const FeederModel& model);

// Throws IoError when the file cannot be read, SchemaError on bad content.
FeederModel load_feeder(const std::filesystem::path& path);
void save_feeder(const FeederModel& model, const std::filesystem::path& path);

// A path to a JSON file, or the name of a built-in feeder.
FeederModel resolve_feeder(const std::string& path_or_name);

std::string to_string(SwitchState state);
SwitchState switch_state_from_string(const std::string& text);

}  // namespace voltvar::feeder
