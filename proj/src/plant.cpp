#include "voltvar/plant.hpp"

#include "voltvar/error.hpp"

namespace voltvar::sim {

FeederPlant::FeederPlant(feeder::FeederModel model, feeder::PowerFlowOptions options)
    : model_(std::move(model)), options_(options) {
  model_.validate();
  options_.start = nullptr;
  for (const feeder::Bus& bus : model_.buses) bus_ids_.push_back(bus.id);
  for (const feeder::PvUnit& pv : model_.pv_units) {
    sites_.push_back(PvSite{pv.id, model_.bus_index(pv.bus), pv.rating_s, pv.p_out});
  }
  energized_ = feeder::energized_buses(model_);
}

std::unique_ptr<Plant> FeederPlant::clone() const { return std::make_unique<FeederPlant>(*this); }

void FeederPlant::set_substation_voltage(double v) {
  model_.buses[model_.slack_index()].v_setpoint = v;
}

double FeederPlant::substation_voltage() const {
  return model_.buses[model_.slack_index()].v_setpoint;
}

void FeederPlant::set_switch(const std::string& line_id, feeder::SwitchState state) {
  model_ = feeder::apply_topology_event(model_, line_id, state);
  energized_ = feeder::energized_buses(model_);
}

bool FeederPlant::pv_in_service(std::size_t u) const { return energized_[sites_.at(u).bus]; }

PlantSolution FeederPlant::solve(std::span<const double> p_out, std::span<const double> q_inj) {
  if (p_out.size() != sites_.size() || q_inj.size() != sites_.size()) {
    throw SchemaError("plant solve: expected one p/q value per PV unit");
  }
  for (std::size_t u = 0; u < sites_.size(); ++u) {
    model_.pv_units[u].p_out = p_out[u];
    model_.pv_units[u].q_inj = q_inj[u];
  }
  feeder::PowerFlowOptions options = options_;
  options.start = have_last_ ? &last_ : nullptr;
  feeder::PowerFlowSolution sol =
      feeder::solve_power_flow(model_, feeder::net_injections(model_, load_scale_), options);
  PlantSolution out;
  out.converged = sol.converged;
  if (sol.converged) {
    last_ = std::move(sol);
    have_last_ = true;
  }
  out.bus_voltages = have_last_ ? last_.voltages : std::vector<double>(bus_ids_.size(), 0.0);
  return out;
}

Eigen::MatrixXd FeederPlant::sensitivity() const {
  if (!have_last_) throw NumericalError("no solved operating point available for sensitivity");
  const feeder::Sensitivity s = feeder::sensitivity_matrix(model_, last_);
  const auto n = static_cast<Eigen::Index>(sites_.size());
  Eigen::MatrixXd full = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t i = 0; i < s.pv_units.size(); ++i) {
    for (std::size_t j = 0; j < s.pv_units.size(); ++j) {
      full(static_cast<Eigen::Index>(s.pv_units[i]), static_cast<Eigen::Index>(s.pv_units[j])) =
          s.a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }
  return full;
}

LinearPlant::LinearPlant(Eigen::MatrixXd a, Eigen::VectorXd v_open, std::vector<PvSite> sites,
                         std::vector<std::string> bus_ids, double substation_voltage)
    : a_(std::move(a)),
      v_open_(std::move(v_open)),
      sites_(std::move(sites)),
      bus_ids_(std::move(bus_ids)),
      substation_(substation_voltage),
      substation_ref_(substation_voltage) {
  const auto n = static_cast<Eigen::Index>(sites_.size());
  if (a_.rows() != n || a_.cols() != n || v_open_.size() != n) {
    throw SchemaError("linear plant: A and V_open must match the number of PV units");
  }
  if (bus_ids_.size() != sites_.size()) {
    throw SchemaError("linear plant: expected one bus per PV unit");
  }
  for (std::size_t u = 0; u < sites_.size(); ++u) {
    if (sites_[u].bus != u) throw SchemaError("linear plant: PV units must sit on distinct buses");
  }
}

LinearPlant LinearPlant::linearize(const feeder::FeederModel& model,
                                   const feeder::PowerFlowSolution& point) {
  const feeder::Sensitivity s = feeder::sensitivity_matrix(model, point);
  std::vector<PvSite> sites;
  std::vector<std::string> buses;
  Eigen::VectorXd q_ref(static_cast<Eigen::Index>(s.pv_units.size()));
  Eigen::VectorXd v_ref(q_ref.size());
  for (std::size_t i = 0; i < s.pv_units.size(); ++i) {
    const feeder::PvUnit& pv = model.pv_units[s.pv_units[i]];
    for (const std::string& b : buses) {
      if (b == pv.bus) throw SchemaError("linear plant: PV units must sit on distinct buses");
    }
    buses.push_back(pv.bus);
    sites.push_back(PvSite{pv.id, i, pv.rating_s, pv.p_out});
    q_ref(static_cast<Eigen::Index>(i)) = pv.q_inj;
    v_ref(static_cast<Eigen::Index>(i)) = point.voltages[model.bus_index(pv.bus)];
  }
  Eigen::VectorXd v_open = v_ref - s.a * q_ref;
  return LinearPlant(s.a, std::move(v_open), std::move(sites), std::move(buses),
                     model.buses[model.slack_index()].v_setpoint);
}

std::unique_ptr<Plant> LinearPlant::clone() const { return std::make_unique<LinearPlant>(*this); }

void LinearPlant::set_switch(const std::string& line_id, feeder::SwitchState) {
  throw SchemaError("linear plant cannot change topology (line '" + line_id + "')");
}

PlantSolution LinearPlant::solve(std::span<const double> p_out, std::span<const double> q_inj) {
  if (p_out.size() != sites_.size() || q_inj.size() != sites_.size()) {
    throw SchemaError("plant solve: expected one p/q value per PV unit");
  }
  const Eigen::Map<const Eigen::VectorXd> q(q_inj.data(), static_cast<Eigen::Index>(q_inj.size()));
  const Eigen::VectorXd v =
      (v_open_ + a_ * q).array() + (substation_ - substation_ref_);
  PlantSolution out;
  out.bus_voltages.assign(v.data(), v.data() + v.size());
  return out;
}

}  // namespace voltvar::sim
