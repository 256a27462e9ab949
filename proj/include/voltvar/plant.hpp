#pragma once

// The physical map from inverter var injections to bus voltages used by the
// simulation engine. FeederPlant solves the full nonlinear power flow every
// call; LinearPlant applies V = V_open + A q, the small-signal model the
// closed-form analysis is built on.

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "voltvar/feeder.hpp"

namespace voltvar::sim {

struct PvSite {
  std::string id;
  std::size_t bus = 0;  // index into Plant::bus_ids()
  double rating_s = 0.0;
  double p_nominal = 0.0;  // output at a multiplier of 1
};

struct PlantSolution {
  std::vector<double> bus_voltages;  // 0 for de-energized buses
  bool converged = true;
};

class Plant {
 public:
  virtual ~Plant() = default;

  virtual std::unique_ptr<Plant> clone() const = 0;
  virtual const std::vector<std::string>& bus_ids() const = 0;
  virtual const std::vector<PvSite>& pv_sites() const = 0;

  virtual void set_substation_voltage(double v) = 0;
  virtual double substation_voltage() const = 0;
  virtual void set_switch(const std::string& line_id, feeder::SwitchState state) = 0;
  virtual void set_load_scale(double factor) = 0;

  // Whether unit `u` is connected to the energized network.
  virtual bool pv_in_service(std::size_t u) const = 0;

  // One quasi-static solve for the given per-unit real and reactive outputs.
  virtual PlantSolution solve(std::span<const double> p_out, std::span<const double> q_inj) = 0;

  // dV/dQ between PV units at the last solved point; rows and columns follow
  // pv_sites(), with zero rows/columns for out-of-service units.
  virtual Eigen::MatrixXd sensitivity() const = 0;
};

class FeederPlant final : public Plant {
 public:
  explicit FeederPlant(feeder::FeederModel model, feeder::PowerFlowOptions options = {});

  std::unique_ptr<Plant> clone() const override;
  const std::vector<std::string>& bus_ids() const override { return bus_ids_; }
  const std::vector<PvSite>& pv_sites() const override { return sites_; }

  void set_substation_voltage(double v) override;
  double substation_voltage() const override;
  void set_switch(const std::string& line_id, feeder::SwitchState state) override;
  void set_load_scale(double factor) override { load_scale_ = factor; }
  bool pv_in_service(std::size_t u) const override;

  PlantSolution solve(std::span<const double> p_out, std::span<const double> q_inj) override;
  Eigen::MatrixXd sensitivity() const override;

  const feeder::FeederModel& model() const { return model_; }
  const feeder::PowerFlowSolution& last_solution() const { return last_; }

 private:
  feeder::FeederModel model_;
  feeder::PowerFlowOptions options_;
  std::vector<std::string> bus_ids_;
  std::vector<PvSite> sites_;
  std::vector<bool> energized_;
  double load_scale_ = 1.0;
  feeder::PowerFlowSolution last_;
  bool have_last_ = false;
};

class LinearPlant final : public Plant {
 public:
  // `v_open` holds the voltage of each unit's bus at zero var injection.
  // Real power does not enter the voltage map. Units must sit on distinct
  // buses.
  LinearPlant(Eigen::MatrixXd a, Eigen::VectorXd v_open, std::vector<PvSite> sites,
              std::vector<std::string> bus_ids, double substation_voltage = 1.0);

  // Linearizes `model` at `point`, using the model's current q_inj as the
  // reference injection.
  static LinearPlant linearize(const feeder::FeederModel& model,
                               const feeder::PowerFlowSolution& point);

  std::unique_ptr<Plant> clone() const override;
  const std::vector<std::string>& bus_ids() const override { return bus_ids_; }
  const std::vector<PvSite>& pv_sites() const override { return sites_; }

  // Shifts every voltage by the change in substation voltage.
  void set_substation_voltage(double v) override { substation_ = v; }
  double substation_voltage() const override { return substation_; }
  // Topology is frozen into A; throws SchemaError.
  void set_switch(const std::string& line_id, feeder::SwitchState state) override;
  void set_load_scale(double) override {}
  bool pv_in_service(std::size_t) const override { return true; }

  PlantSolution solve(std::span<const double> p_out, std::span<const double> q_inj) override;
  Eigen::MatrixXd sensitivity() const override { return a_; }

 private:
  Eigen::MatrixXd a_;
  Eigen::VectorXd v_open_;
  std::vector<PvSite> sites_;
  std::vector<std::string> bus_ids_;
  double substation_ = 1.0;
  double substation_ref_ = 1.0;
};

}  // namespace voltvar::sim
