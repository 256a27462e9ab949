// Acceptance checks. Prints one PASS/FAIL line per criterion; an optional
// argument selects a single criterion. Exits nonzero when anything fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "voltvar/analysis.hpp"
#include "voltvar/error.hpp"
#include "voltvar/feeder.hpp"
#include "voltvar/metrics.hpp"
#include "voltvar/scenario_io.hpp"
#include "voltvar/sim.hpp"

using namespace voltvar;
using nlohmann::json;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int digits = 4) {
  std::ostringstream o;
  o.precision(digits);
  o << x;
  return o.str();
}

sim::Scenario preset_with(const std::string& preset, const std::vector<std::string>& overrides) {
  json doc = sim::preset_json(preset);
  for (const std::string& o : overrides) sim::apply_override(doc, o);
  return sim::scenario_from_json(doc);
}

sim::SimulationTrace run_on_feeder(const sim::Scenario& s) {
  return sim::run(s, sim::FeederPlant(feeder::builtin_feeder(s.feeder)));
}

// Calibrated 4-bus operating point used by the presets: substation at 1.03,
// no var injection.
feeder::FeederModel four_bus(bool closed) {
  feeder::FeederModel m = feeder::builtin_feeder("ieee4_mod");
  m.buses[m.slack_index()].v_setpoint = 1.03;
  if (closed) m = feeder::apply_topology_event(m, "switch1", feeder::SwitchState::kClosed);
  return m;
}

feeder::Sensitivity sensitivity_at(const feeder::FeederModel& m) {
  const feeder::PowerFlowSolution sol = feeder::solve_power_flow(m);
  if (!sol.converged) throw NumericalError("operating point did not converge");
  return feeder::sensitivity_matrix(m, sol);
}

Verdict critical_slope() {
  const feeder::Sensitivity s = sensitivity_at(four_bus(false));
  const double a33 = s.a(0, 0);
  const analysis::StabilityReport r = analysis::stability_report(s.a, Eigen::VectorXd::Ones(1));
  const double mc = r.critical_slopes[0];
  const bool ok = std::abs(a33 - 0.2857) <= 0.02 && std::abs(mc - 3.5) <= 0.25;
  return {ok, "a33 = " + fmt(a33) + ", m_c = " + fmt(mc)};
}

Verdict stability_dichotomy() {
  const sim::SimulationTrace calm =
      run_on_feeder(preset_with("fig3a", {"controller.kind=conventional", "controller.slope=1", "horizon=60"}));
  double residual = 1.0;
  int settled_at = -1;
  for (std::size_t k = 1; k < calm.ticks(); ++k) {
    if (calm.dispatch_residual[k] < 1e-6) {
      settled_at = static_cast<int>(k);
      break;
    }
  }
  residual = calm.dispatch_residual.back();
  const sim::SimulationTrace wild =
      run_on_feeder(preset_with("fig3a", {"controller.kind=conventional", "controller.slope=6"}));
  const std::size_t bus3 = 2;
  double lo = 1e9, hi = -1e9;
  for (std::size_t k = wild.ticks() - 20; k < wild.ticks(); ++k) {
    lo = std::min(lo, wild.voltages[k][bus3]);
    hi = std::max(hi, wild.voltages[k][bus3]);
  }
  const bool ok = settled_at > 0 && residual < 1e-6 && hi - lo > 0.01;
  return {ok, "m=1 residual < 1e-6 at tick " + std::to_string(settled_at) + ", m=6 node-3 peak-to-peak " +
                  fmt(hi - lo)};
}

// Outer-loop error per window for a scalar linear plant with a = 0.2857 and
// m = 1, starting from the settled droop equilibrium.
std::vector<double> kd_run(double k_d) {
  Eigen::MatrixXd a(1, 1);
  a << 0.2857;
  Eigen::VectorXd v_open(1);
  v_open << 1.05;
  const sim::LinearPlant plant(a, v_open, {sim::PvSite{"pv", 0, 10.0, 0.0}}, {"bus"});
  sim::Scenario s;
  s.name = "kd";
  s.horizon = 80;
  s.settle_initial = true;
  s.controller.kind = control::Adaptive{};
  s.controller.slope = 1.0;
  auto& ad = s.controller.adaptive;
  ad.k_d = k_d;
  ad.eps_sse = 0.0;
  ad.m_init = 1.0;
  ad.m_floor = 1.0;
  // slope steps too small to matter: m stays at 1
  ad.delta_vf = 1e-12;
  ad.delta_vf_bar = 2e-12;
  const sim::SimulationTrace t = sim::run(s, plant);
  const auto mu = sim::setpoint_schedule(s, t.pv_ids);
  std::vector<double> out;
  for (const sim::WindowError& w : sim::window_errors(t, mu, 0, s.outer_period())) out.push_back(w.sse_end);
  return out;
}

Verdict kd_regimes() {
  std::string detail;
  const double b45 = analysis::scalar_b(0.2857, 1.0, 4.5);
  bool ok = std::abs(b45) < 1e-3;
  detail += "b(4.5) = " + fmt(b45, 3);

  auto show = [](const std::vector<double>& e) {
    std::string s;
    for (std::size_t i = 0; i < std::min<std::size_t>(e.size(), 5); ++i) s += (i ? " " : "") + fmt(e[i], 3);
    return s;
  };

  const std::vector<double> e2 = kd_run(2.0);
  bool mono = true;
  for (std::size_t i = 1; i < e2.size(); ++i) {
    if (!(std::abs(e2[i]) < std::abs(e2[i - 1])) || (e2[i] * e2[0] < 0.0 && std::abs(e2[i]) > 1e-12)) mono = false;
  }
  detail += "; k=2 [" + show(e2) + "] " + (mono ? "monotone" : "NOT monotone");
  ok = ok && mono;

  const std::vector<double> e45 = kd_run(4.5);
  const bool dead = e45.size() > 1 && std::abs(e45[1]) < 1e-4;
  detail += "; k=4.5 after one loop " + fmt(std::abs(e45[1]), 3);
  ok = ok && dead;

  const std::vector<double> e7 = kd_run(7.0);
  bool alt = true;
  for (std::size_t i = 1; i < 5 && i < e7.size(); ++i) {
    if (!(e7[i] * e7[i - 1] < 0.0 && std::abs(e7[i]) < std::abs(e7[i - 1]))) alt = false;
  }
  detail += "; k=7 [" + show(e7) + "] " + (alt ? "alternating, decaying" : "NOT alternating/decaying");
  ok = ok && alt;

  const std::vector<double> e10 = kd_run(10.0);
  bool grow = true;
  for (std::size_t i = 1; i < e10.size(); ++i) {
    if (std::abs(e10[i]) < std::abs(e10[i - 1])) grow = false;
  }
  detail += "; k=10 [" + show(e10) + "] " + (grow ? "non-decreasing" : "DECREASED");
  ok = ok && grow;
  return {ok, detail};
}

Verdict b_matrix() {
  const feeder::Sensitivity s = sensitivity_at(four_bus(true));
  const analysis::ConvergenceReport r =
      analysis::outer_b_matrix(s.a, Eigen::VectorXd::Ones(2), Eigen::VectorXd::Constant(2, 4.0));
  const Eigen::VectorXcd ev = r.b_matrix.eigenvalues();
  double hi = std::max(std::abs(ev(0)), std::abs(ev(1)));
  double lo = std::min(std::abs(ev(0)), std::abs(ev(1)));
  const bool ok = std::abs(hi - 0.73) <= 0.05 && std::abs(lo - 0.56) <= 0.05;
  return {ok, "|eig(B)| = " + fmt(hi, 3) + ", " + fmt(lo, 3)};
}

Verdict disturbance_recovery() {
  const sim::Scenario adaptive = preset_with("fig10a", {});
  const sim::SimulationTrace t = run_on_feeder(adaptive);
  const double eps = adaptive.controller.adaptive.eps_sse;
  const std::size_t pv3 = 0;
  double worst_after = 0.0;
  for (std::size_t k = 80 + 2 * static_cast<std::size_t>(adaptive.outer_period()); k < t.ticks(); ++k) {
    worst_after = std::max(worst_after, std::abs(t.pv_voltage(k, pv3) - t.setpoints[k][pv3]));
  }
  const sim::Scenario delayed = preset_with("fig3a", {"horizon=400"});
  const sim::SimulationTrace d = run_on_feeder(delayed);
  double least_delayed = 1e9;
  for (std::size_t k = 81; k < d.ticks(); ++k) {
    least_delayed = std::min(least_delayed, std::abs(d.pv_voltage(k, pv3) - 1.0));
  }
  const bool ok = worst_after <= eps && least_delayed > 0.01;
  return {ok, "adaptive max |V-mu| from t=100: " + fmt(worst_after, 3) + " (eps " + fmt(eps, 3) +
                  "), delayed min SSE after t=80: " + fmt(least_delayed, 3)};
}

// Settled droop equilibrium before and after a 0.02 pu substation step,
// against the closed form built from A at the pre-step point.
Verdict sse_closed_form() {
  std::string detail;
  bool ok = true;
  for (bool closed : {false, true}) {
    const feeder::FeederModel model = four_bus(closed);
    sim::Scenario s;
    s.name = "sse";
    s.horizon = 400;
    s.settle_initial = true;
    s.controller.kind = control::Conventional{};
    s.controller.slope = 1.0;
    s.events.push_back(sim::Event{200, sim::SubstationVoltage{1.05}});

    const auto measure = [&](sim::Plant& plant, double& linear_err) {
      const sim::SimulationTrace t = sim::run(s, plant);
      const std::size_t before = 199, after = t.ticks() - 1;
      if (!t.settled(1e-13)) throw NumericalError("droop run did not settle");
      // A at the settled pre-step point; open-loop disturbance at the held q
      std::unique_ptr<sim::Plant> probe = plant.clone();
      probe->set_substation_voltage(1.03);
      probe->solve(t.p_out[before], t.q_inj[before]);
      const Eigen::MatrixXd a = probe->sensitivity();
      const std::size_t n = t.pv_ids.size();
      Eigen::VectorXd v_bar(n), v_sim(n);
      for (std::size_t u = 0; u < n; ++u) {
        v_bar(u) = t.pv_voltage(before, u);
        v_sim(u) = t.pv_voltage(after, u);
      }
      probe->set_substation_voltage(1.05);
      const sim::PlantSolution held = probe->solve(t.p_out[before], t.q_inj[before]);
      Eigen::VectorXd dv(n);
      for (std::size_t u = 0; u < n; ++u) dv(u) = held.bus_voltages[t.pv_bus[u]] - v_bar(u);
      const analysis::SsePrediction p =
          analysis::predict_sse(a, Eigen::VectorXd::Ones(n), dv, v_bar, Eigen::VectorXd::Ones(n));
      linear_err = (p.v_new - v_sim).cwiseAbs().maxCoeff();
    };

    const feeder::PowerFlowSolution point = feeder::solve_power_flow(model);
    sim::LinearPlant linear = sim::LinearPlant::linearize(model, point);
    double lin = 0.0, full = 0.0;
    measure(linear, lin);
    sim::FeederPlant feeder_plant(model);
    measure(feeder_plant, full);
    ok = ok && lin <= 1e-6 && full <= 1e-3;
    detail += std::string(closed ? "; closed" : "open") + " switch: linear " + fmt(lin, 2) + ", power flow " +
              fmt(full, 2);
  }
  return {ok, detail};
}

Verdict property_suite() {
  struct Row {
    std::string kind;
    sim::MetricsReport m;
  };
  std::vector<Row> rows;
  for (const char* kind : {"none", "conventional", "delayed", "adaptive"}) {
    const sim::Scenario s = preset_with("intermittency", {std::string("controller.kind=") + kind});
    const sim::SimulationTrace t = run_on_feeder(s);
    rows.push_back({kind, sim::metrics(t, sim::setpoint_schedule(s, t.pv_ids), sim::limits_for(s))});
  }
  const auto& none = rows[0].m;
  const auto& conv = rows[1].m;
  const auto& del = rows[2].m;
  const auto& ad = rows[3].m;
  const bool ok = ad.fc == 0 && conv.fc >= 1 && ad.msse < del.msse && del.msse < none.msse && ad.vvi == 0;
  std::string detail;
  for (const Row& r : rows) {
    detail += (detail.empty() ? "" : "; ") + r.kind + " MSSE " + fmt(r.m.msse, 3) + "% FC " +
              std::to_string(r.m.fc) + " VVI " + std::to_string(r.m.vvi);
  }
  return {ok, detail};
}

Verdict invariants() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> sym(-2.0, 2.0), pos(-0.5, 1.0), frac(0.0, 0.999);
  int norm_fail = 0, rowsum_fail = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 8;
    Eigen::MatrixXd x(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) x(i, j) = sym(rng);
    const double rho = analysis::spectral_radius(x);
    if (rho > analysis::norm_inf(x) + 1e-12 || rho > analysis::norm_one(x) + 1e-12) ++norm_fail;
  }
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 8;
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = pos(rng);
    Eigen::VectorXd m(n);
    for (int i = 0; i < n; ++i) m(i) = frac(rng) / a.row(i).cwiseAbs().sum();
    if (!(analysis::spectral_radius(m.asDiagonal() * a) < 1.0)) ++rowsum_fail;
  }

  double fd_err = 0.0;
  for (const feeder::FeederModel& model :
       {four_bus(false), four_bus(true), feeder::builtin_feeder("radial30")}) {
    const feeder::PowerFlowSolution sol = feeder::solve_power_flow(model);
    const feeder::Sensitivity s = feeder::sensitivity_matrix(model, sol);
    const double h = 1e-5;
    for (std::size_t j = 0; j < s.pv_units.size(); ++j) {
      feeder::FeederModel up = model, down = model;
      up.pv_units[s.pv_units[j]].q_inj += h;
      down.pv_units[s.pv_units[j]].q_inj -= h;
      const auto su = feeder::solve_power_flow(up, feeder::PowerFlowOptions{1e-12, 50, nullptr});
      const auto sd = feeder::solve_power_flow(down, feeder::PowerFlowOptions{1e-12, 50, nullptr});
      for (std::size_t i = 0; i < s.pv_units.size(); ++i) {
        const std::size_t bus = model.bus_index(model.pv_units[s.pv_units[i]].bus);
        const double fd = (su.voltages[bus] - sd.voltages[bus]) / (2.0 * h);
        fd_err = std::max(fd_err, std::abs(fd - s.a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
      }
    }
  }

  bool same = true;
  for (const char* name : {"intermittency", "fig10c"}) {
    const sim::Scenario s = preset_with(name, {});
    same = same && run_on_feeder(s) == run_on_feeder(s);
  }

  const bool ok = norm_fail == 0 && rowsum_fail == 0 && fd_err < 1e-4 && same;
  return {ok, "norm bound violations " + std::to_string(norm_fail) + "/100, row-sum violations " +
                  std::to_string(rowsum_fail) + "/100, finite-difference max error " + fmt(fd_err, 2) +
                  ", determinism " + (same ? "identical" : "DIFFERENT")};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Verdict()> check;
  };
  const std::vector<Criterion> all = {
      {1, "critical slope", 1.0, critical_slope},
      {2, "stability dichotomy", 2.0, stability_dichotomy},
      {3, "outer-loop k_d regimes", 5.0, kd_regimes},
      {4, "B-matrix eigenvalues", 1.0, b_matrix},
      {5, "disturbance recovery", 5.0, disturbance_recovery},
      {6, "SSE closed form", 5.0, sse_closed_form},
      {7, "intermittency properties", 60.0, property_suite},
      {8, "invariant suites", 30.0, invariants},
  };
  int only = 0;
  if (argc > 1) only = std::atoi(argv[1]);

  int failed = 0;
  for (const Criterion& c : all) {
    if (only != 0 && c.id != only) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.budget_s) {
      v.pass = false;
      v.detail += "; over time budget " + fmt(c.budget_s, 3) + " s";
    }
    std::printf("criterion %d %-26s %s (%.2f s) %s\n", c.id, c.name, v.pass ? "PASS" : "FAIL", secs,
                v.detail.c_str());
    if (!v.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
