#include "voltvar/feeder_io.hpp"

#include <fstream>
#include <sstream>

#include "voltvar/error.hpp"

namespace voltvar::feeder {

using nlohmann::json;

namespace {

template <typename T>
T required(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw SchemaError(where + ": missing field '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw SchemaError(where + ": field '" + key + "' has the wrong type");
  }
}

template <typename T>
T optional(const json& obj, const char* key, T fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw SchemaError(where + ": field '" + key + "' has the wrong type");
  }
}

const json& array_field(const json& doc, const char* key) {
  if (!doc.contains(key) || !doc.at(key).is_array()) {
    throw SchemaError(std::string("feeder: '") + key + "' must be an array");
  }
  return doc.at(key);
}

}  // namespace

std::string to_string(SwitchState state) {
  switch (state) {
    case SwitchState::kClosed:
      return "closed";
    case SwitchState::kOpen:
      return "open";
    case SwitchState::kNotASwitch:
      return "not-a-switch";
  }
  return "not-a-switch";
}

SwitchState switch_state_from_string(const std::string& text) {
  if (text == "closed") return SwitchState::kClosed;
  if (text == "open") return SwitchState::kOpen;
  if (text == "not-a-switch") return SwitchState::kNotASwitch;
  throw SchemaError("unknown switch state '" + text + "'");
}

FeederModel feeder_from_json(const json& doc) {
  if (!doc.is_object()) throw SchemaError("feeder: document must be an object");
  FeederModel model;
  model.name = optional<std::string>(doc, "name", "feeder", "feeder");
  model.base_kva = optional<double>(doc, "base_kva", 1000.0, "feeder");

  for (const json& b : array_field(doc, "buses")) {
    Bus bus;
    bus.id = required<std::string>(b, "id", "bus");
    const std::string where = "bus '" + bus.id + "'";
    const std::string kind = optional<std::string>(b, "kind", "load", where);
    if (kind == "slack") {
      bus.kind = BusKind::kSlack;
    } else if (kind == "load") {
      bus.kind = BusKind::kLoad;
    } else {
      throw SchemaError(where + ": unknown kind '" + kind + "'");
    }
    bus.base_voltage = required<double>(b, "base_voltage", where);
    bus.load_p = optional<double>(b, "load_p", 0.0, where);
    bus.load_q = optional<double>(b, "load_q", 0.0, where);
    bus.v_setpoint = optional<double>(b, "v_setpoint", 1.0, where);
    model.buses.push_back(std::move(bus));
  }
  for (const json& l : array_field(doc, "lines")) {
    Line line;
    line.id = required<std::string>(l, "id", "line");
    const std::string where = "line '" + line.id + "'";
    line.from = required<std::string>(l, "from", where);
    line.to = required<std::string>(l, "to", where);
    line.resistance = required<double>(l, "resistance", where);
    line.reactance = required<double>(l, "reactance", where);
    line.switch_state = switch_state_from_string(optional<std::string>(l, "switch", "not-a-switch", where));
    model.lines.push_back(std::move(line));
  }
  if (doc.contains("pv_units")) {
    for (const json& p : array_field(doc, "pv_units")) {
      PvUnit pv;
      pv.id = required<std::string>(p, "id", "pv unit");
      const std::string where = "pv unit '" + pv.id + "'";
      pv.bus = required<std::string>(p, "bus", where);
      pv.rating_s = required<double>(p, "rating_s", where);
      pv.p_out = optional<double>(p, "p_out", 0.0, where);
      pv.q_inj = optional<double>(p, "q_inj", 0.0, where);
      model.pv_units.push_back(std::move(pv));
    }
  }
  model.validate();
  return model;
}

json feeder_to_json(const FeederModel& model) {
  json doc;
  doc["name"] = model.name;
  doc["base_kva"] = model.base_kva;
  doc["buses"] = json::array();
  for (const Bus& bus : model.buses) {
    json b = {{"id", bus.id},
              {"kind", bus.kind == BusKind::kSlack ? "slack" : "load"},
              {"base_voltage", bus.base_voltage},
              {"load_p", bus.load_p},
              {"load_q", bus.load_q}};
    if (bus.kind == BusKind::kSlack) b["v_setpoint"] = bus.v_setpoint;
    doc["buses"].push_back(std::move(b));
  }
  doc["lines"] = json::array();
  for (const Line& line : model.lines) {
    doc["lines"].push_back({{"id", line.id},
                            {"from", line.from},
                            {"to", line.to},
                            {"resistance", line.resistance},
                            {"reactance", line.reactance},
                            {"switch", to_string(line.switch_state)}});
  }
  doc["pv_units"] = json::array();
  for (const PvUnit& pv : model.pv_units) {
    doc["pv_units"].push_back({{"id", pv.id},
                               {"bus", pv.bus},
                               {"rating_s", pv.rating_s},
                               {"p_out", pv.p_out},
                               {"q_inj", pv.q_inj}});
  }
  return doc;
}

FeederModel load_feeder(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open feeder file '" + path.string() + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw SchemaError("feeder file '" + path.string() + "': " + e.what());
  }
  return feeder_from_json(doc);
}

void save_feeder(const FeederModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write feeder file '" + path.string() + "'");
  out << feeder_to_json(model).dump(2) << '\n';
}

FeederModel resolve_feeder(const std::string& path_or_name) {
  for (const std::string& name : builtin_feeder_names()) {
    if (name == path_or_name) return builtin_feeder(name);
  }
  return load_feeder(path_or_name);
}

}  // namespace voltvar::feeder
