#pragma once

// Balanced single-phase feeder model, Newton-Raphson power flow and
// voltage-to-reactive-power sensitivities. All electrical quantities are in
// per unit on a single system VA base; only Bus::base_voltage is in volts.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace voltvar::feeder {

enum class BusKind { kSlack, kLoad };

struct Bus {
  std::string id;
  BusKind kind = BusKind::kLoad;
  double base_voltage = 1.0;  // volts
  double load_p = 0.0;
  double load_q = 0.0;
  double v_setpoint = 1.0;  // regulated magnitude, slack bus only
};

enum class SwitchState { kClosed, kOpen, kNotASwitch };

struct Line {
  std::string id;
  std::string from;
  std::string to;
  double resistance = 0.0;
  double reactance = 0.0;
  SwitchState switch_state = SwitchState::kNotASwitch;

  bool in_service() const { return switch_state != SwitchState::kOpen; }
};

struct PvUnit {
  std::string id;
  std::string bus;
  double rating_s = 0.0;
  double p_out = 0.0;
  double q_inj = 0.0;
};

struct FeederModel {
  std::string name;
  double base_kva = 1000.0;
  std::vector<Bus> buses;
  std::vector<Line> lines;
  std::vector<PvUnit> pv_units;

  // Throws SchemaError on duplicate ids, dangling references, non-physical
  // values or a slack count other than one; TopologyError when a bus cannot
  // be reached from the slack bus even with every switch closed.
  void validate() const;

  std::size_t bus_index(const std::string& id) const;
  std::size_t line_index(const std::string& id) const;
  std::size_t pv_index(const std::string& id) const;
  std::size_t slack_index() const;
};

bool operator==(const Bus&, const Bus&);
bool operator==(const Line&, const Line&);
bool operator==(const PvUnit&, const PvUnit&);
bool operator==(const FeederModel&, const FeederModel&);

// Net per-bus injections (generation minus load).
struct BusInjections {
  std::vector<double> p;
  std::vector<double> q;
};

// Loads scaled by `load_scale`, plus each PV unit's p_out and q_inj.
BusInjections net_injections(const FeederModel& model, double load_scale = 1.0);

// Buses reachable from the slack through in-service lines.
std::vector<bool> energized_buses(const FeederModel& model);

struct PowerFlowSolution {
  std::vector<double> voltages;  // 0 for de-energized buses
  std::vector<double> angles;    // radians
  std::vector<bool> energized;
  bool converged = false;
  int iterations = 0;
  double max_mismatch = 0.0;
};

struct PowerFlowOptions {
  double tolerance = 1e-8;
  int max_iterations = 30;
  // Warm start; ignored when its shape does not match the model.
  const PowerFlowSolution* start = nullptr;
};

// Full Newton-Raphson in polar form over the energized island. Non-convergence
// is reported through `converged`, never thrown. A warm start that fails is
// retried once from a flat start.
PowerFlowSolution solve_power_flow(const FeederModel& model,
                                   const BusInjections& injections,
                                   const PowerFlowOptions& options = {});

// Convenience overload using net_injections(model).
PowerFlowSolution solve_power_flow(const FeederModel& model,
                                   const PowerFlowOptions& options = {});

// dV/dQ restricted to energized PV units: entry (i, j) is the change in the
// voltage magnitude at unit i's bus per unit of reactive injection by unit j.
struct Sensitivity {
  Eigen::MatrixXd a;
  std::vector<std::size_t> pv_units;  // indices into FeederModel::pv_units
};

// Throws NumericalError when the Jacobian at `operating_point` is singular.
Sensitivity sensitivity_matrix(const FeederModel& model,
                               const PowerFlowSolution& operating_point);

// Sets the state of line `line_id`. Switches may isolate downstream sections
// (those buses become de-energized). Opening an ordinary line that would cut a
// bus carrying load or PV off the slack throws TopologyError.
FeederModel apply_topology_event(const FeederModel& model, const std::string& line_id,
                                 SwitchState new_state);

// Complex bus admittance matrix over all buses, in-service lines only.
Eigen::MatrixXcd admittance_matrix(const FeederModel& model);

// Real power balance residual: slack injection plus net bus injections minus
// series losses. Zero at an exact solution.
double power_balance_residual(const FeederModel& model, const BusInjections& injections,
                              const PowerFlowSolution& solution);

// Built-in networks: "ieee4_mod" and "radial30".
FeederModel builtin_feeder(const std::string& name);
std::vector<std::string> builtin_feeder_names();

}  // namespace voltvar::feeder
