#include <string>
#include <vector>

#include "voltvar/error.hpp"
#include "voltvar/scenario_io.hpp"

namespace voltvar::sim {

using nlohmann::json;

namespace {

json base(const std::string& name, const std::string& feeder, const std::string& kind, double slope) {
  return json{{"name", name},
              {"feeder", feeder},
              {"horizon", 160},
              {"dt_inner", 1.0},
              {"T_outer", 10},
              {"seed", 1},
              {"controller", {{"kind", kind}, {"mu", 1.0}, {"deadband", 0.0}, {"slope", slope}}},
              {"adaptive", {{"k_d", 4.0}}},
              {"events", json::array()}};
}

json substation_step(json doc, double v) {
  doc["events"].push_back({{"tick", 0}, {"type", "substation_voltage"}, {"value", 1.03}});
  doc["events"].push_back({{"tick", 80}, {"type", "substation_voltage"}, {"value", v}});
  return doc;
}

json cloud(json doc, double scale) {
  doc["events"].push_back({{"tick", 0}, {"type", "substation_voltage"}, {"value", 1.03}});
  doc["events"].push_back({{"tick", 80}, {"type", "cloud_cover"}, {"scale", scale}});
  return doc;
}

json topology(json doc) {
  doc["events"].push_back({{"tick", 0}, {"type", "substation_voltage"}, {"value", 1.03}});
  doc["events"].push_back({{"tick", 80}, {"type", "switch"}, {"line", "switch1"}, {"state", "closed"}});
  return doc;
}

json with_tau(json doc, double tau) {
  doc["controller"]["tau"] = tau;
  doc["settle_initial"] = tau > 0.5;
  return doc;
}

json adaptive_4bus(json doc, double m_init) {
  doc["settle_initial"] = true;
  doc["adaptive"]["m_init"] = m_init;
  doc["adaptive"]["m_floor"] = m_init;
  doc["adaptive"]["eps_vf"] = 0.2;
  doc["adaptive"]["delta_vf"] = 0.25;
  doc["adaptive"]["vf_lim"] = 1.0;
  doc["adaptive"]["vf_lim_bar"] = 3.0;
  return doc;
}

json radial(const std::string& name, const std::string& kind, double slope) {
  json doc = base(name, "radial30", kind, slope);
  doc["horizon"] = 600;
  doc["controller"]["initial_slope_factor"] = 0.5;
  doc["adaptive"]["k_d"] = 1.0;
  doc["adaptive"]["eps_vf"] = 0.2;
  doc["adaptive"]["vf_lim"] = 1.0;
  doc["adaptive"]["vf_lim_bar"] = 3.0;
  doc["adaptive"]["delta_vf"] = 0.05;
  doc["adaptive"]["delta_vf_bar"] = 0.2;
  return doc;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"fig3a",         "fig3b",     "fig3c",         "fig10a",          "fig10b",
          "fig10c",        "setpoint_step", "intermittency", "cloud_cover", "substation_surge"};
}

json preset_json(const std::string& name) {
  if (name == "fig3a") return with_tau(substation_step(base(name, "ieee4_mod", "delayed", 1.0), 1.05), 0.5);
  if (name == "fig3b") return with_tau(cloud(base(name, "ieee4_mod", "delayed", 6.0), 0.2), 0.9);
  if (name == "fig3c") return with_tau(topology(base(name, "ieee4_mod", "delayed", 6.0)), 0.9);
  if (name == "fig10a") return adaptive_4bus(substation_step(base(name, "ieee4_mod", "adaptive", 1.0), 1.05), 1.0);
  if (name == "fig10b") return adaptive_4bus(cloud(base(name, "ieee4_mod", "adaptive", 6.0), 0.2), 1.0);
  if (name == "fig10c") return adaptive_4bus(topology(base(name, "ieee4_mod", "adaptive", 6.0)), 1.0);
  if (name == "setpoint_step") {
    json doc = radial(name, "adaptive", 0.75);
    doc["events"].push_back({{"tick", 300}, {"type", "setpoint"}, {"mu", 0.96}});
    return doc;
  }
  if (name == "intermittency") {
    json doc = radial(name, "adaptive", 0.75);
    doc["series"] = {{"clouds", {{"dwell", 30}, {"low", 0.2}, {"high", 1.0}}}};
    doc["events"].push_back({{"tick", 0}, {"type", "intermittency"}, {"series", "clouds"}});
    return doc;
  }
  if (name == "cloud_cover") {
    json doc = radial(name, "adaptive", 0.9);
    doc["events"].push_back({{"tick", 300}, {"type", "cloud_cover"}, {"scale", 0.2}});
    return doc;
  }
  if (name == "substation_surge") {
    json doc = radial(name, "adaptive", 0.75);
    doc["events"].push_back({{"tick", 300}, {"type", "substation_voltage"}, {"value", 1.04}});
    return doc;
  }
  throw SchemaError("unknown preset '" + name + "'");
}

}  // namespace voltvar::sim
