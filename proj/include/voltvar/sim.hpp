#pragma once

// Quasi-static time-series engine. One inner tick applies the tick's events,
// lets every inverter dispatch from its own previous voltage, then solves the
// network once:  Q(t) = f(V(t-1)),  V(t) = h(Q(t)).  Adaptive inverters
// re-dispatch their parameters every T ticks from their own window of data.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "voltvar/adaptation.hpp"
#include "voltvar/control.hpp"
#include "voltvar/feeder.hpp"
#include "voltvar/plant.hpp"

namespace voltvar::sim {

// An empty unit list means every PV unit.
struct SubstationVoltage {
  double v = 1.0;
};
struct SetPoint {
  double mu = 1.0;
  std::vector<std::string> units;
};
struct CloudCover {
  double scale = 1.0;
  std::vector<std::string> units;
};
struct Intermittency {
  std::string series;
  std::vector<std::string> units;
};
struct SwitchChange {
  std::string line;
  feeder::SwitchState state = feeder::SwitchState::kClosed;
};
struct LoadScale {
  double factor = 1.0;
};

using EventKind =
    std::variant<SubstationVoltage, SetPoint, CloudCover, Intermittency, SwitchChange, LoadScale>;

struct Event {
  int tick = 0;
  EventKind kind;
};

const char* event_name(const EventKind& kind);

// Random telegraph cloud signal: the PV multiplier holds a level drawn
// uniformly from [low, high] and jumps to a fresh level with probability
// 1/dwell each tick.
struct IntermittencySeries {
  double dwell = 30.0;  // mean ticks between jumps
  double low = 0.2;
  double high = 1.0;
};

struct ControllerSettings {
  control::ControllerKind kind = control::Adaptive{};
  double mu = 1.0;
  double deadband = 0.0;
  // Droop slope for the conventional and delayed laws, valid at the tick-0
  // var capacity. With track_capacity the voltage cutoffs stay fixed and the
  // var limits follow the available capacity, so the effective slope scales
  // with it.
  double slope = 1.0;
  bool track_capacity = true;
  adaptation::AdaptiveConfig adaptive;
  // When set, each adaptive unit starts at this fraction of its critical
  // slope at the tick-0 operating point instead of adaptive.m_init.
  std::optional<double> initial_slope_factor;
};

struct Scenario {
  std::string name;
  std::string feeder;  // default feeder for the CLI: built-in name or path
  int horizon = 160;
  double dt_inner = 1.0;  // seconds
  std::uint64_t seed = 1;
  // Iterate the inner law to its fixed point before tick 0 is recorded.
  bool settle_initial = false;
  ControllerSettings controller;
  // Per-unit PV multiplier series indexed by tick; the last value holds.
  std::map<std::string, std::vector<double>> pv_profile;
  std::map<std::string, IntermittencySeries> series;
  std::vector<Event> events;

  int outer_period() const { return controller.adaptive.horizon; }

  // Structural checks that need no network. Throws SchemaError.
  void validate() const;
  // Also checks every referenced unit, line and series against `plant`.
  void validate(const Plant& plant) const;
};

enum TickFlag : std::uint8_t {
  kFlagNonConverged = 1,
  kFlagEvent = 2,
  kFlagOuterLoop = 4,
};

struct OuterLoopRecord {
  int tick = 0;
  std::size_t unit = 0;
  control::AdaptiveParams params;
  adaptation::WindowStats stats;
};

struct SimulationTrace {
  std::vector<std::string> bus_ids;
  std::vector<std::string> pv_ids;
  std::vector<std::size_t> pv_bus;  // index into bus_ids
  double dt_inner = 1.0;
  int outer_period = 10;
  // Row t holds tick t; row 0 is the initial operating point.
  std::vector<std::vector<double>> voltages;  // [tick][bus]
  std::vector<std::vector<double>> q_inj;     // [tick][unit]
  std::vector<std::vector<double>> p_out;     // [tick][unit]
  std::vector<std::vector<double>> setpoints;  // [tick][unit]
  std::vector<std::uint8_t> flags;            // [tick]
  std::vector<double> dispatch_residual;      // [tick] max_u |Q(t) - Q(t-1)|
  std::vector<OuterLoopRecord> outer;

  std::size_t ticks() const { return voltages.size(); }
  double pv_voltage(std::size_t tick, std::size_t unit) const {
    return voltages[tick][pv_bus[unit]];
  }
  // The last tick moved no dispatch by more than `tol`.
  bool settled(double tol = 1e-6) const;
};

bool operator==(const OuterLoopRecord&, const OuterLoopRecord&);
bool operator==(const SimulationTrace&, const SimulationTrace&);

class Engine {
 public:
  // Validates the scenario, applies tick-0 events, solves tick 0 and records
  // it. Throws SchemaError on invalid input.
  Engine(const Scenario& scenario, std::unique_ptr<Plant> plant);

  // One inner tick.
  void step();
  void run_to_end();
  bool done() const { return tick_ >= scenario_.horizon; }
  int tick() const { return tick_; }

  const SimulationTrace& trace() const { return trace_; }
  SimulationTrace take_trace() { return std::move(trace_); }
  const Plant& plant() const { return *plant_; }

  // Current adaptive parameters of unit u (meaningful for the adaptive kind).
  const control::AdaptiveParams& adaptive_params(std::size_t u) const { return units_[u].adaptive; }

 private:
  struct UnitState {
    double mu = 1.0;
    double multiplier = 1.0;
    enum class Source { kConstant, kProfile, kSeries } source = Source::kConstant;
    const std::vector<double>* profile = nullptr;
    std::vector<double> series;  // multiplier per tick
    double capacity_ref = 0.0;
    double q = 0.0;
    control::AdaptiveParams adaptive;
  };

  void apply_events(int tick);
  void apply_event(const EventKind& kind, int tick);
  std::vector<std::size_t> select_units(const std::vector<std::string>& ids) const;
  void update_real_power(int tick);
  double dispatch(std::size_t u, double v_prev) const;
  void solve_and_record(int tick, std::uint8_t flags, double residual);
  void outer_loop(int tick);
  void settle();

  Scenario scenario_;
  std::unique_ptr<Plant> plant_;
  std::vector<UnitState> units_;
  std::vector<double> p_;
  std::vector<double> q_;
  std::vector<double> v_;  // last solved bus voltages
  std::size_t next_event_ = 0;
  int tick_ = 0;
  SimulationTrace trace_;
};

SimulationTrace run(const Scenario& scenario, const Plant& plant);

// Per-tick, per-unit set-points implied by the scenario's set-point events.
std::vector<std::vector<double>> setpoint_schedule(const Scenario& scenario,
                                                   const std::vector<std::string>& pv_ids);

// Telegraph multiplier series of length horizon + 1 for one unit.
std::vector<double> generate_intermittency(const IntermittencySeries& spec, std::uint64_t seed,
                                           const std::string& series_id, std::size_t unit,
                                           int horizon);

}  // namespace voltvar::sim
