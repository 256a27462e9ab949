#include "voltvar/feeder.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <deque>
#include <limits>
#include <set>

#include "voltvar/error.hpp"

namespace voltvar::feeder {

namespace {

template <typename T>
std::size_t find_by_id(const std::vector<T>& items, const std::string& id, const char* what) {
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].id == id) return i;
  }
  throw SchemaError(std::string("unknown ") + what + " '" + id + "'");
}

std::vector<bool> reachable_from_slack(const FeederModel& model, bool through_open_switches) {
  const std::size_t n = model.buses.size();
  std::vector<std::vector<std::size_t>> adjacency(n);
  for (const Line& line : model.lines) {
    if (!through_open_switches && !line.in_service()) continue;
    const std::size_t f = model.bus_index(line.from);
    const std::size_t t = model.bus_index(line.to);
    adjacency[f].push_back(t);
    adjacency[t].push_back(f);
  }
  std::vector<bool> seen(n, false);
  std::deque<std::size_t> queue{model.slack_index()};
  seen[model.slack_index()] = true;
  while (!queue.empty()) {
    const std::size_t bus = queue.front();
    queue.pop_front();
    for (std::size_t next : adjacency[bus]) {
      if (!seen[next]) {
        seen[next] = true;
        queue.push_back(next);
      }
    }
  }
  return seen;
}

// Ordering of the Newton unknowns: angles of the energized load buses, then
// their magnitudes, both in bus order.
struct UnknownMap {
  std::vector<std::size_t> buses;      // energized non-slack buses
  std::vector<long> position;          // bus -> position in `buses`, -1 otherwise
};

UnknownMap map_unknowns(const FeederModel& model, const std::vector<bool>& energized) {
  UnknownMap map;
  map.position.assign(model.buses.size(), -1);
  const std::size_t slack = model.slack_index();
  for (std::size_t i = 0; i < model.buses.size(); ++i) {
    if (i == slack || !energized[i]) continue;
    map.position[i] = static_cast<long>(map.buses.size());
    map.buses.push_back(i);
  }
  return map;
}

void compute_injections(const Eigen::MatrixXcd& y, const std::vector<double>& v,
                        const std::vector<double>& theta, const std::vector<bool>& energized,
                        std::vector<double>& p, std::vector<double>& q) {
  const std::size_t n = v.size();
  p.assign(n, 0.0);
  q.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!energized[i]) continue;
    for (std::size_t k = 0; k < n; ++k) {
      if (!energized[k]) continue;
      const std::complex<double> yik = y(i, k);
      if (yik == std::complex<double>(0.0, 0.0)) continue;
      const double angle = theta[i] - theta[k];
      const double c = std::cos(angle);
      const double s = std::sin(angle);
      p[i] += v[i] * v[k] * (yik.real() * c + yik.imag() * s);
      q[i] += v[i] * v[k] * (yik.real() * s - yik.imag() * c);
    }
  }
}

Eigen::MatrixXd jacobian(const Eigen::MatrixXcd& y, const std::vector<double>& v,
                         const std::vector<double>& theta, const std::vector<double>& p,
                         const std::vector<double>& q, const UnknownMap& map) {
  const Eigen::Index m = static_cast<Eigen::Index>(map.buses.size());
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(2 * m, 2 * m);
  for (Eigen::Index r = 0; r < m; ++r) {
    const std::size_t i = map.buses[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < m; ++c) {
      const std::size_t k = map.buses[static_cast<std::size_t>(c)];
      const double g = y(i, k).real();
      const double b = y(i, k).imag();
      if (i == k) {
        jac(r, c) = -q[i] - b * v[i] * v[i];
        jac(r, m + c) = p[i] / v[i] + g * v[i];
        jac(m + r, c) = p[i] - g * v[i] * v[i];
        jac(m + r, m + c) = q[i] / v[i] - b * v[i];
        continue;
      }
      if (g == 0.0 && b == 0.0) continue;
      const double angle = theta[i] - theta[k];
      const double cs = std::cos(angle);
      const double sn = std::sin(angle);
      jac(r, c) = v[i] * v[k] * (g * sn - b * cs);
      jac(r, m + c) = v[i] * (g * cs + b * sn);
      jac(m + r, c) = -v[i] * v[k] * (g * cs + b * sn);
      jac(m + r, m + c) = v[i] * (g * sn - b * cs);
    }
  }
  return jac;
}

PowerFlowSolution newton(const FeederModel& model, const Eigen::MatrixXcd& y,
                         const BusInjections& injections, const std::vector<bool>& energized,
                         const PowerFlowOptions& options, const PowerFlowSolution* start) {
  const std::size_t n = model.buses.size();
  const std::size_t slack = model.slack_index();
  const UnknownMap map = map_unknowns(model, energized);
  const Eigen::Index m = static_cast<Eigen::Index>(map.buses.size());

  PowerFlowSolution sol;
  sol.energized = energized;
  sol.voltages.assign(n, 0.0);
  sol.angles.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!energized[i]) continue;
    if (start != nullptr && start->energized[i] && start->voltages[i] > 0.0) {
      sol.voltages[i] = start->voltages[i];
      sol.angles[i] = start->angles[i];
    } else {
      sol.voltages[i] = 1.0;
    }
  }
  sol.voltages[slack] = model.buses[slack].v_setpoint;
  sol.angles[slack] = 0.0;

  std::vector<double> p;
  std::vector<double> q;
  Eigen::VectorXd mismatch(2 * m);
  for (int iter = 0;; ++iter) {
    compute_injections(y, sol.voltages, sol.angles, energized, p, q);
    double worst = 0.0;
    for (Eigen::Index r = 0; r < m; ++r) {
      const std::size_t i = map.buses[static_cast<std::size_t>(r)];
      mismatch(r) = injections.p[i] - p[i];
      mismatch(m + r) = injections.q[i] - q[i];
      worst = std::max({worst, std::abs(mismatch(r)), std::abs(mismatch(m + r))});
    }
    sol.iterations = iter;
    sol.max_mismatch = worst;
    if (!std::isfinite(worst)) {
      sol.converged = false;
      return sol;
    }
    if (worst <= options.tolerance) {
      sol.converged = true;
      return sol;
    }
    if (iter >= options.max_iterations) {
      sol.converged = false;
      return sol;
    }
    const Eigen::MatrixXd jac = jacobian(y, sol.voltages, sol.angles, p, q, map);
    const Eigen::VectorXd step = jac.partialPivLu().solve(mismatch);
    if (!step.allFinite()) {
      sol.converged = false;
      return sol;
    }
    for (Eigen::Index r = 0; r < m; ++r) {
      const std::size_t i = map.buses[static_cast<std::size_t>(r)];
      sol.angles[i] += step(r);
      sol.voltages[i] += step(m + r);
    }
  }
}

}  // namespace

std::size_t FeederModel::bus_index(const std::string& id) const {
  return find_by_id(buses, id, "bus");
}

std::size_t FeederModel::line_index(const std::string& id) const {
  return find_by_id(lines, id, "line");
}

std::size_t FeederModel::pv_index(const std::string& id) const {
  return find_by_id(pv_units, id, "pv unit");
}

std::size_t FeederModel::slack_index() const {
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].kind == BusKind::kSlack) return i;
  }
  throw SchemaError("feeder '" + name + "' has no slack bus");
}

void FeederModel::validate() const {
  if (buses.empty()) throw SchemaError("feeder '" + name + "' has no buses");
  if (!(base_kva > 0.0)) throw SchemaError("base_kva must be positive");
  std::set<std::string> ids;
  int slack_count = 0;
  for (const Bus& bus : buses) {
    if (!ids.insert(bus.id).second) throw SchemaError("duplicate bus id '" + bus.id + "'");
    if (!(bus.base_voltage > 0.0)) {
      throw SchemaError("bus '" + bus.id + "': base_voltage must be positive");
    }
    if (!std::isfinite(bus.load_p) || !std::isfinite(bus.load_q)) {
      throw SchemaError("bus '" + bus.id + "': load values must be finite");
    }
    if (bus.kind == BusKind::kSlack) {
      ++slack_count;
      if (!(bus.v_setpoint > 0.0) || !std::isfinite(bus.v_setpoint)) {
        throw SchemaError("slack bus '" + bus.id + "': v_setpoint must be positive");
      }
    }
  }
  if (slack_count != 1) {
    throw SchemaError("feeder '" + name + "' must have exactly one slack bus, found " +
                      std::to_string(slack_count));
  }
  ids.clear();
  for (const Line& line : lines) {
    if (!ids.insert(line.id).second) throw SchemaError("duplicate line id '" + line.id + "'");
    bus_index(line.from);
    bus_index(line.to);
    if (line.from == line.to) throw SchemaError("line '" + line.id + "' is a self loop");
    if (!std::isfinite(line.resistance) || !std::isfinite(line.reactance) ||
        std::hypot(line.resistance, line.reactance) <= 0.0) {
      throw SchemaError("line '" + line.id + "': impedance magnitude must be positive");
    }
  }
  ids.clear();
  for (const PvUnit& pv : pv_units) {
    if (!ids.insert(pv.id).second) throw SchemaError("duplicate pv unit id '" + pv.id + "'");
    const std::size_t b = bus_index(pv.bus);
    if (buses[b].kind == BusKind::kSlack) {
      throw SchemaError("pv unit '" + pv.id + "' sits on the slack bus");
    }
    if (!(pv.rating_s > 0.0)) throw SchemaError("pv unit '" + pv.id + "': rating_s must be positive");
    if (!(pv.p_out >= 0.0) || pv.p_out > pv.rating_s) {
      throw SchemaError("pv unit '" + pv.id + "': p_out must lie in [0, rating_s]");
    }
    if (!std::isfinite(pv.q_inj)) throw SchemaError("pv unit '" + pv.id + "': q_inj must be finite");
  }
  const std::vector<bool> reachable = reachable_from_slack(*this, true);
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (!reachable[i]) throw TopologyError("bus '" + buses[i].id + "' is disconnected from the slack bus");
  }
}

bool operator==(const Bus& a, const Bus& b) {
  return a.id == b.id && a.kind == b.kind && a.base_voltage == b.base_voltage &&
         a.load_p == b.load_p && a.load_q == b.load_q && a.v_setpoint == b.v_setpoint;
}

bool operator==(const Line& a, const Line& b) {
  return a.id == b.id && a.from == b.from && a.to == b.to && a.resistance == b.resistance &&
         a.reactance == b.reactance && a.switch_state == b.switch_state;
}

bool operator==(const PvUnit& a, const PvUnit& b) {
  return a.id == b.id && a.bus == b.bus && a.rating_s == b.rating_s && a.p_out == b.p_out &&
         a.q_inj == b.q_inj;
}

bool operator==(const FeederModel& a, const FeederModel& b) {
  return a.name == b.name && a.base_kva == b.base_kva && a.buses == b.buses &&
         a.lines == b.lines && a.pv_units == b.pv_units;
}

BusInjections net_injections(const FeederModel& model, double load_scale) {
  BusInjections inj;
  inj.p.resize(model.buses.size());
  inj.q.resize(model.buses.size());
  for (std::size_t i = 0; i < model.buses.size(); ++i) {
    inj.p[i] = -model.buses[i].load_p * load_scale;
    inj.q[i] = -model.buses[i].load_q * load_scale;
  }
  for (const PvUnit& pv : model.pv_units) {
    const std::size_t b = model.bus_index(pv.bus);
    inj.p[b] += pv.p_out;
    inj.q[b] += pv.q_inj;
  }
  return inj;
}

std::vector<bool> energized_buses(const FeederModel& model) {
  return reachable_from_slack(model, false);
}

Eigen::MatrixXcd admittance_matrix(const FeederModel& model) {
  const auto n = static_cast<Eigen::Index>(model.buses.size());
  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
  for (const Line& line : model.lines) {
    if (!line.in_service()) continue;
    const auto f = static_cast<Eigen::Index>(model.bus_index(line.from));
    const auto t = static_cast<Eigen::Index>(model.bus_index(line.to));
    const std::complex<double> series = 1.0 / std::complex<double>(line.resistance, line.reactance);
    y(f, f) += series;
    y(t, t) += series;
    y(f, t) -= series;
    y(t, f) -= series;
  }
  return y;
}

PowerFlowSolution solve_power_flow(const FeederModel& model, const BusInjections& injections,
                                   const PowerFlowOptions& options) {
  if (injections.p.size() != model.buses.size() || injections.q.size() != model.buses.size()) {
    throw SchemaError("injection vectors do not match the bus count");
  }
  const std::vector<bool> energized = energized_buses(model);
  const Eigen::MatrixXcd y = admittance_matrix(model);

  const PowerFlowSolution* start = options.start;
  if (start != nullptr && (start->voltages.size() != model.buses.size() ||
                           start->energized.size() != model.buses.size())) {
    start = nullptr;
  }
  PowerFlowSolution sol = newton(model, y, injections, energized, options, start);
  if (!sol.converged && start != nullptr) {
    sol = newton(model, y, injections, energized, options, nullptr);
  }
  return sol;
}

PowerFlowSolution solve_power_flow(const FeederModel& model, const PowerFlowOptions& options) {
  return solve_power_flow(model, net_injections(model), options);
}

Sensitivity sensitivity_matrix(const FeederModel& model, const PowerFlowSolution& operating_point) {
  if (!operating_point.converged) {
    throw NumericalError("sensitivity requested at a non-converged operating point");
  }
  const std::vector<bool>& energized = operating_point.energized;
  const UnknownMap map = map_unknowns(model, energized);
  const Eigen::MatrixXcd y = admittance_matrix(model);
  std::vector<double> p;
  std::vector<double> q;
  compute_injections(y, operating_point.voltages, operating_point.angles, energized, p, q);
  const Eigen::MatrixXd jac =
      jacobian(y, operating_point.voltages, operating_point.angles, p, q, map);

  Sensitivity out;
  for (std::size_t u = 0; u < model.pv_units.size(); ++u) {
    if (energized[model.bus_index(model.pv_units[u].bus)]) out.pv_units.push_back(u);
  }
  const auto k = static_cast<Eigen::Index>(out.pv_units.size());
  out.a = Eigen::MatrixXd::Zero(k, k);
  if (k == 0) return out;

  const Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
  if (!lu.isInvertible()) {
    throw NumericalError("power-flow Jacobian is singular at the operating point (near voltage collapse)");
  }
  const Eigen::Index m = static_cast<Eigen::Index>(map.buses.size());
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(2 * m, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const std::size_t bus = model.bus_index(model.pv_units[out.pv_units[static_cast<std::size_t>(j)]].bus);
    rhs(m + map.position[bus], j) = 1.0;
  }
  const Eigen::MatrixXd dx = lu.solve(rhs);
  for (Eigen::Index i = 0; i < k; ++i) {
    const std::size_t bus = model.bus_index(model.pv_units[out.pv_units[static_cast<std::size_t>(i)]].bus);
    out.a.row(i) = dx.row(m + map.position[bus]);
  }
  return out;
}

FeederModel apply_topology_event(const FeederModel& model, const std::string& line_id,
                                 SwitchState new_state) {
  FeederModel next = model;
  Line& line = next.lines[next.line_index(line_id)];
  if (new_state == SwitchState::kNotASwitch) {
    throw SchemaError("line '" + line_id + "': target state must be open or closed");
  }
  const bool is_switch = line.switch_state != SwitchState::kNotASwitch;
  if (!is_switch && new_state == SwitchState::kClosed) return next;
  if (!is_switch) {
    const std::vector<bool> before = energized_buses(model);
    line.switch_state = SwitchState::kOpen;
    const std::vector<bool> after = energized_buses(next);
    std::set<std::string> loaded;
    for (const Bus& bus : next.buses) {
      if (bus.load_p != 0.0 || bus.load_q != 0.0) loaded.insert(bus.id);
    }
    for (const PvUnit& pv : next.pv_units) loaded.insert(pv.bus);
    for (std::size_t i = 0; i < next.buses.size(); ++i) {
      if (before[i] && !after[i] && loaded.count(next.buses[i].id) != 0) {
        throw TopologyError("opening line '" + line_id + "' islands bus '" + next.buses[i].id + "'");
      }
    }
    return next;
  }
  line.switch_state = new_state;
  return next;
}

double power_balance_residual(const FeederModel& model, const BusInjections& injections,
                              const PowerFlowSolution& solution) {
  const Eigen::MatrixXcd y = admittance_matrix(model);
  std::vector<double> p;
  std::vector<double> q;
  compute_injections(y, solution.voltages, solution.angles, solution.energized, p, q);
  const std::size_t slack = model.slack_index();
  double total = p[slack];
  for (std::size_t i = 0; i < model.buses.size(); ++i) {
    if (i != slack && solution.energized[i]) total += injections.p[i];
  }
  double losses = 0.0;
  for (const Line& line : model.lines) {
    if (!line.in_service()) continue;
    const std::size_t f = model.bus_index(line.from);
    const std::size_t t = model.bus_index(line.to);
    if (!solution.energized[f]) continue;
    const std::complex<double> vf = std::polar(solution.voltages[f], solution.angles[f]);
    const std::complex<double> vt = std::polar(solution.voltages[t], solution.angles[t]);
    const std::complex<double> current = (vf - vt) / std::complex<double>(line.resistance, line.reactance);
    losses += std::norm(current) * line.resistance;
  }
  return total - losses;
}

}  // namespace voltvar::feeder
