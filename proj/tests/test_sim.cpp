#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "voltvar/analysis.hpp"
#include "voltvar/error.hpp"
#include "voltvar/metrics.hpp"
#include "voltvar/scenario_io.hpp"
#include "voltvar/sim.hpp"

using namespace voltvar;
using namespace voltvar::sim;
using nlohmann::json;

namespace {

Scenario preset_with(const std::string& preset, const std::vector<std::string>& overrides) {
  json doc = preset_json(preset);
  for (const std::string& o : overrides) apply_override(doc, o);
  return scenario_from_json(doc);
}

SimulationTrace run_on_feeder(const Scenario& s) {
  return run(s, FeederPlant(feeder::builtin_feeder(s.feeder)));
}

LinearPlant linear_plant(const Eigen::MatrixXd& a, const Eigen::VectorXd& v_open, double rating) {
  std::vector<PvSite> sites;
  std::vector<std::string> buses;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const std::string id = std::to_string(i);
    sites.push_back(PvSite{"pv" + id, static_cast<std::size_t>(i), rating, 0.0});
    buses.push_back("b" + id);
  }
  return LinearPlant(a, v_open, sites, buses);
}

Scenario droop_scenario(control::ControllerKind kind, double slope, int horizon) {
  Scenario s;
  s.name = "test";
  s.horizon = horizon;
  s.controller.kind = kind;
  s.controller.slope = slope;
  return s;
}

double peak_to_peak(const SimulationTrace& t, std::size_t bus, std::size_t last) {
  double lo = 1e9, hi = -1e9;
  for (std::size_t k = t.ticks() - last; k < t.ticks(); ++k) {
    lo = std::min(lo, t.voltages[k][bus]);
    hi = std::max(hi, t.voltages[k][bus]);
  }
  return hi - lo;
}

SimulationTrace synthetic_trace(const std::vector<double>& v) {
  SimulationTrace t;
  t.bus_ids = {"b"};
  t.pv_ids = {"pv"};
  t.pv_bus = {0};
  for (double x : v) {
    t.voltages.push_back({x});
    t.q_inj.push_back({0.0});
    t.p_out.push_back({0.0});
    t.flags.push_back(0);
    t.dispatch_residual.push_back(0.0);
  }
  return t;
}

}  // namespace

TEST_CASE("without control the voltages only move with events") {
  const Scenario s = preset_with("fig3a", {"controller.kind=none"});
  const SimulationTrace t = run_on_feeder(s);
  REQUIRE(t.ticks() == static_cast<std::size_t>(s.horizon) + 1);
  for (std::size_t k = 1; k < t.ticks(); ++k) {
    for (double q : t.q_inj[k]) CHECK(q == 0.0);
    if (k != 80) CHECK(t.voltages[k] == t.voltages[k - 1]);
  }
  CHECK(t.voltages[80] != t.voltages[79]);
  CHECK((t.flags[80] & kFlagEvent) != 0);
  const FeederPlant plant(feeder::builtin_feeder("ieee4_mod"));
  const std::size_t slack = 0;
  CHECK(plant.bus_ids()[slack] == "1");
  CHECK(t.voltages[79][slack] == 1.03);
  CHECK(t.voltages[80][slack] == 1.05);
}

TEST_CASE("conventional droop on the 4-bus feeder: m = 1 settles, m = 6 oscillates") {
  const Scenario calm = preset_with("fig3a", {"controller.kind=conventional", "controller.slope=1", "horizon=60"});
  const SimulationTrace a = run_on_feeder(calm);
  CHECK(a.settled(1e-6));

  const Scenario wild = preset_with("fig3a", {"controller.kind=conventional", "controller.slope=6"});
  const SimulationTrace b = run_on_feeder(wild);
  const std::size_t bus3 = 2;
  REQUIRE(b.bus_ids[bus3] == "3");
  CHECK(peak_to_peak(b, bus3, 20) > 0.01);
  CHECK_FALSE(b.settled(1e-6));
}

TEST_CASE("a unit's dispatch depends only on its own bus voltage") {
  // Decoupled plant: changing unit 1's set-point must leave unit 0 untouched.
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
  a(0, 0) = 0.3;
  a(1, 1) = 0.2;
  Eigen::VectorXd v_open(2);
  v_open << 1.03, 1.02;
  const LinearPlant plant = linear_plant(a, v_open, 1.0);
  for (control::ControllerKind kind :
       {control::ControllerKind{control::Conventional{}}, control::ControllerKind{control::Delayed{0.4}},
        control::ControllerKind{control::Adaptive{}}}) {
    Scenario base = droop_scenario(kind, 2.0, 80);
    Scenario moved = base;
    moved.events.push_back(Event{20, SetPoint{0.97, {"pv1"}}});
    const SimulationTrace x = run(base, plant);
    const SimulationTrace y = run(moved, plant);
    bool unit1_moved = false;
    for (std::size_t k = 0; k < x.ticks(); ++k) {
      CHECK(x.q_inj[k][0] == y.q_inj[k][0]);
      CHECK(x.voltages[k][0] == y.voltages[k][0]);
      unit1_moved = unit1_moved || x.q_inj[k][1] != y.q_inj[k][1];
    }
    CHECK(unit1_moved);
  }
}

TEST_CASE("identical inputs give identical traces") {
  for (const char* name : {"fig10c", "intermittency"}) {
    const Scenario s = preset_with(name, {});
    CHECK(run_on_feeder(s) == run_on_feeder(s));
  }
  const Scenario a = preset_with("intermittency", {"seed=1"});
  const Scenario b = preset_with("intermittency", {"seed=2"});
  CHECK_FALSE(run_on_feeder(a).voltages == run_on_feeder(b).voltages);
}

TEST_CASE("a settled droop run is an equilibrium of the plant and the law") {
  const Scenario s = preset_with("fig3a", {"controller.kind=conventional", "controller.slope=1", "horizon=200"});
  const SimulationTrace t = run_on_feeder(s);
  REQUIRE(t.settled(1e-10));
  FeederPlant plant(feeder::builtin_feeder("ieee4_mod"));
  plant.set_substation_voltage(1.05);
  const std::size_t last = t.ticks() - 1;
  const PlantSolution sol = plant.solve(t.p_out[last], t.q_inj[last]);
  REQUIRE(sol.converged);
  for (std::size_t b = 0; b < sol.bus_voltages.size(); ++b) {
    CHECK(std::abs(sol.bus_voltages[b] - t.voltages[last][b]) < 1e-8);
  }
  // q = f(V): the droop law evaluated at the final voltage reproduces q
  const std::size_t u = 0;
  const double v = t.pv_voltage(last, u);
  const double q = t.q_inj[last][u];
  CHECK(std::abs(q - (-1.0 * (v - 1.0))) < 1e-8);
}

TEST_CASE("settling agrees with the spectral stability test") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> entry(0.02, 0.3), target(0.2, 1.8), vo(0.98, 1.04);
  int stable = 0, unstable = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 1 + trial % 5;
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) a(i, j) = a(j, i) = entry(rng);
    Eigen::VectorXd v_open(n);
    for (int i = 0; i < n; ++i) v_open(i) = vo(rng);
    double rho_goal = target(rng);
    if (std::abs(rho_goal - 1.0) < 0.15) rho_goal = rho_goal < 1.0 ? 0.85 : 1.15;
    const double m = rho_goal / analysis::spectral_radius(a);
    const LinearPlant plant = linear_plant(a, v_open, 50.0);
    const Scenario s = droop_scenario(control::Conventional{}, m, 400);
    const SimulationTrace t = run(s, plant);
    const bool predicted = analysis::stability_report(a, Eigen::VectorXd::Constant(n, m)).stable_spectral;
    CHECK(predicted == (rho_goal < 1.0));
    CHECK(t.settled(1e-9) == predicted);
    (predicted ? stable : unstable)++;
  }
  CHECK(stable > 5);
  CHECK(unstable > 5);
}

TEST_CASE("the outer loop fires every T ticks") {
  const Scenario s = preset_with("fig10a", {});
  const SimulationTrace t = run_on_feeder(s);
  for (std::size_t k = 1; k < t.ticks(); ++k) {
    const bool fired = (t.flags[k] & kFlagOuterLoop) != 0;
    CHECK(fired == (k % static_cast<std::size_t>(s.outer_period()) == 0));
  }
  CHECK(t.outer.size() == static_cast<std::size_t>(s.horizon / s.outer_period()));
}

TEST_CASE("set-point, cloud and switch events reach the units") {
  const Scenario sp = preset_with("setpoint_step", {"controller.kind=none", "horizon=310"});
  const SimulationTrace a = run_on_feeder(sp);
  CHECK(a.setpoints[299][0] == 1.0);
  CHECK(a.setpoints[300][0] == 0.96);

  const SimulationTrace c = run_on_feeder(preset_with("fig3b", {"controller.kind=none"}));
  CHECK(c.p_out[80][0] == doctest::Approx(0.2 * c.p_out[79][0]));

  const SimulationTrace d = run_on_feeder(preset_with("fig3c", {"controller.kind=none"}));
  const std::size_t bus4 = 3;
  REQUIRE(d.bus_ids[bus4] == "4");
  CHECK(d.voltages[79][bus4] == 0.0);
  CHECK(d.voltages[80][bus4] > 0.9);

  Scenario bad = sp;
  bad.events.push_back(Event{5, SetPoint{1.0, {"nope"}}});
  CHECK_THROWS_AS(run_on_feeder(bad), SchemaError);
}

TEST_CASE("metrics on hand-built traces") {
  MetricsLimits lim;
  const MetricsReport pinned = metrics(synthetic_trace(std::vector<double>(21, 1.0)), 1.0, lim);
  CHECK(pinned.msse == 0.0);
  CHECK(pinned.fc == 0);
  CHECK(pinned.vvi == 0);

  const MetricsReport high = metrics(synthetic_trace(std::vector<double>(21, 1.07)), 1.0, lim);
  CHECK(high.vvi == 20);
  CHECK(high.msse == doctest::Approx(7.0));
  CHECK(high.fc == 0);

  std::vector<double> square = {1.0};
  for (int k = 1; k <= 10; ++k) square.push_back(k % 2 ? 1.005 : 0.995);
  const MetricsReport sq = metrics(synthetic_trace(square), 1.0, lim);
  CHECK(sq.fc == 1);
  CHECK(sq.msse == doctest::Approx(0.5));

  // range B only counts after the dwell time
  SimulationTrace b = synthetic_trace(std::vector<double>(401, 1.055));
  const MetricsReport rb = metrics(b, 1.0, lim);
  CHECK(rb.vvi == 400 - 300 + 1);

  // de-energized samples are skipped
  const MetricsReport dark = metrics(synthetic_trace(std::vector<double>(21, 0.0)), 1.0, lim);
  CHECK(dark.vvi == 0);
  CHECK(dark.msse == 0.0);
}

TEST_CASE("intermittency series") {
  const IntermittencySeries spec{30.0, 0.2, 1.0};
  const std::vector<double> a = generate_intermittency(spec, 7, "clouds", 0, 600);
  CHECK(a.size() == 601);
  CHECK(a == generate_intermittency(spec, 7, "clouds", 0, 600));
  CHECK(a != generate_intermittency(spec, 7, "clouds", 1, 600));
  CHECK(a != generate_intermittency(spec, 8, "clouds", 0, 600));
  int jumps = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k] >= 0.2);
    CHECK(a[k] <= 1.0);
    if (k > 0 && a[k] != a[k - 1]) ++jumps;
  }
  CHECK(jumps > 5);
  CHECK(jumps < 60);
}
