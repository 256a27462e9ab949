#include <string>
#include <vector>

#include "voltvar/error.hpp"
#include "voltvar/feeder.hpp"

namespace voltvar::feeder {

namespace {

Bus load_bus(std::string id, double base_voltage, double p, double q) {
  Bus bus;
  bus.id = std::move(id);
  bus.kind = BusKind::kLoad;
  bus.base_voltage = base_voltage;
  bus.load_p = p;
  bus.load_q = q;
  return bus;
}

Line line(std::string id, std::string from, std::string to, double r, double x,
          SwitchState state = SwitchState::kNotASwitch) {
  return Line{std::move(id), std::move(from), std::move(to), r, x, state};
}

// Modified IEEE 4-bus feeder on a 1 MVA base: 600 kW load and a 900 kW PV
// array (inverter rated 1.1x the panels) at node 3, and an identical node 4
// hanging off node 3 through a normally open switch. Impedances are sized so
// that dV3/dQ3 is about 0.2857 pu at the base operating point.
FeederModel ieee4_mod() {
  FeederModel m;
  m.name = "ieee4_mod";
  m.base_kva = 1000.0;

  Bus slack;
  slack.id = "1";
  slack.kind = BusKind::kSlack;
  slack.base_voltage = 12470.0;
  slack.v_setpoint = 1.03;
  m.buses = {slack, load_bus("2", 12470.0, 0.0, 0.0), load_bus("3", 4160.0, 0.6, 0.0),
             load_bus("4", 4160.0, 0.6, 0.0)};
  m.lines = {line("line12", "1", "2", 0.045, 0.09), line("xfmr23", "2", "3", 0.105, 0.21),
             line("switch1", "3", "4", 0.06, 0.16, SwitchState::kOpen)};
  m.pv_units = {PvUnit{"pv3", "3", 0.99, 0.9, 0.0}, PvUnit{"pv4", "4", 0.99, 0.9, 0.0}};
  return m;
}

// 30-bus radial feeder on a 1 MVA base: a 15-section trunk with two 7-bus
// laterals and ten PV units concentrated on the far half.
FeederModel radial30() {
  FeederModel m;
  m.name = "radial30";
  m.base_kva = 1000.0;

  Bus slack;
  slack.id = "b1";
  slack.kind = BusKind::kSlack;
  slack.base_voltage = 12470.0;
  slack.v_setpoint = 1.0;
  m.buses.push_back(slack);

  auto bus_name = [](int k) { return "b" + std::to_string(k); };
  const double load_p = 0.02;
  const double load_q = 0.008;
  for (int k = 2; k <= 30; ++k) m.buses.push_back(load_bus(bus_name(k), 12470.0, load_p, load_q));

  for (int k = 2; k <= 16; ++k) {
    m.lines.push_back(line("l" + std::to_string(k - 1) + "_" + std::to_string(k), bus_name(k - 1),
                           bus_name(k), 0.008, 0.016));
  }
  auto lateral = [&](int root, int first, int last) {
    int prev = root;
    for (int k = first; k <= last; ++k) {
      m.lines.push_back(line("l" + std::to_string(prev) + "_" + std::to_string(k), bus_name(prev),
                             bus_name(k), 0.012, 0.018));
      prev = k;
    }
  };
  lateral(6, 17, 23);
  lateral(11, 24, 30);

  const std::vector<int> pv_buses = {12, 14, 16, 19, 21, 23, 25, 27, 29, 30};
  for (int b : pv_buses) {
    m.pv_units.push_back(PvUnit{"pv" + std::to_string(b), bus_name(b), 0.11, 0.1, 0.0});
  }
  return m;
}

}  // namespace

FeederModel builtin_feeder(const std::string& name) {
  if (name == "ieee4_mod") return ieee4_mod();
  if (name == "radial30") return radial30();
  throw SchemaError("unknown built-in feeder '" + name + "'");
}

std::vector<std::string> builtin_feeder_names() { return {"ieee4_mod", "radial30"}; }

}  // namespace voltvar::feeder
