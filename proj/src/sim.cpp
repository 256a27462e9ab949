#include "voltvar/sim.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <random>
#include <set>

#include "voltvar/analysis.hpp"
#include "voltvar/error.hpp"

namespace voltvar::sim {

namespace {

double capacity(double rating_s, double p) {
  return std::sqrt(std::max(rating_s * rating_s - p * p, 0.0));
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

bool in_range(double v, double lo, double hi) { return std::isfinite(v) && v >= lo && v <= hi; }

}  // namespace

const char* event_name(const EventKind& kind) {
  struct Visitor {
    const char* operator()(const SubstationVoltage&) const { return "substation_voltage"; }
    const char* operator()(const SetPoint&) const { return "setpoint"; }
    const char* operator()(const CloudCover&) const { return "cloud_cover"; }
    const char* operator()(const Intermittency&) const { return "intermittency"; }
    const char* operator()(const SwitchChange&) const { return "switch"; }
    const char* operator()(const LoadScale&) const { return "load_scale"; }
  };
  return std::visit(Visitor{}, kind);
}

void Scenario::validate() const {
  controller.adaptive.validate();
  if (horizon < outer_period()) throw SchemaError("horizon must be at least T_outer");
  if (!(dt_inner > 0.0)) throw SchemaError("dt_inner must be positive");
  if (!in_range(controller.mu, 0.5, 1.5)) throw SchemaError("controller.mu must lie in [0.5, 1.5]");
  if (!(controller.slope >= 0.0)) throw SchemaError("controller.slope must be non-negative");
  if (!(controller.deadband >= 0.0)) throw SchemaError("controller.deadband must be non-negative");
  if (const auto* delayed = std::get_if<control::Delayed>(&controller.kind)) {
    if (!(delayed->tau >= 0.0 && delayed->tau < 1.0)) throw SchemaError("tau must lie in [0, 1)");
  }
  if (controller.initial_slope_factor && !(*controller.initial_slope_factor > 0.0)) {
    throw SchemaError("controller.initial_slope_factor must be positive");
  }
  for (const auto& [id, spec] : series) {
    if (!(spec.dwell >= 1.0)) throw SchemaError("series '" + id + "': dwell must be >= 1");
    if (!(spec.low >= 0.0 && spec.high >= spec.low)) {
      throw SchemaError("series '" + id + "': need 0 <= low <= high");
    }
  }
  for (const auto& [id, values] : pv_profile) {
    if (values.empty()) throw SchemaError("pv_profile '" + id + "' is empty");
    for (double v : values) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw SchemaError("pv_profile '" + id + "' must be >= 0");
    }
  }
  int last = 0;
  for (const Event& e : events) {
    if (e.tick < 0) throw SchemaError("event ticks must be non-negative");
    if (e.tick < last) throw SchemaError("events must be sorted by tick");
    last = e.tick;
    struct Checker {
      const Scenario& s;
      void operator()(const SubstationVoltage& ev) const {
        if (!in_range(ev.v, 0.5, 1.5)) throw SchemaError("substation_voltage must lie in [0.5, 1.5]");
      }
      void operator()(const SetPoint& ev) const {
        if (!in_range(ev.mu, 0.5, 1.5)) throw SchemaError("setpoint mu must lie in [0.5, 1.5]");
      }
      void operator()(const CloudCover& ev) const {
        if (!(ev.scale >= 0.0) || !std::isfinite(ev.scale)) throw SchemaError("cloud_cover scale must be >= 0");
      }
      void operator()(const Intermittency& ev) const {
        if (s.series.count(ev.series) == 0) throw SchemaError("unknown series '" + ev.series + "'");
      }
      void operator()(const SwitchChange& ev) const {
        if (ev.state == feeder::SwitchState::kNotASwitch) throw SchemaError("switch state must be open or closed");
      }
      void operator()(const LoadScale& ev) const {
        if (!(ev.factor >= 0.0) || !std::isfinite(ev.factor)) throw SchemaError("load_scale factor must be >= 0");
      }
    };
    std::visit(Checker{*this}, e.kind);
  }
}

void Scenario::validate(const Plant& plant) const {
  validate();
  std::set<std::string> units;
  for (const PvSite& site : plant.pv_sites()) units.insert(site.id);
  auto check_units = [&](const std::vector<std::string>& ids) {
    for (const std::string& id : ids) {
      if (units.count(id) == 0) throw SchemaError("unknown pv unit '" + id + "'");
    }
  };
  for (const auto& [id, values] : pv_profile) check_units({id});
  for (const Event& e : events) {
    if (const auto* ev = std::get_if<SetPoint>(&e.kind)) check_units(ev->units);
    if (const auto* ev = std::get_if<CloudCover>(&e.kind)) check_units(ev->units);
    if (const auto* ev = std::get_if<Intermittency>(&e.kind)) check_units(ev->units);
  }
  if (const auto* fp = dynamic_cast<const FeederPlant*>(&plant)) {
    for (const Event& e : events) {
      if (const auto* ev = std::get_if<SwitchChange>(&e.kind)) fp->model().line_index(ev->line);
    }
  }
}

bool SimulationTrace::settled(double tol) const {
  return !dispatch_residual.empty() && dispatch_residual.back() < tol;
}

bool operator==(const OuterLoopRecord& a, const OuterLoopRecord& b) {
  const auto& p = a.params;
  const auto& q = b.params;
  return a.tick == b.tick && a.unit == b.unit && p.slope == q.slope && p.q_offset == q.q_offset &&
         p.q_min == q.q_min && p.q_max == q.q_max && p.v_min == q.v_min && p.v_max == q.v_max &&
         p.mu == q.mu && a.stats.sse_avg == b.stats.sse_avg && a.stats.vf == b.stats.vf &&
         a.stats.p_pv_avg == b.stats.p_pv_avg;
}

bool operator==(const SimulationTrace& a, const SimulationTrace& b) {
  return a.bus_ids == b.bus_ids && a.pv_ids == b.pv_ids && a.pv_bus == b.pv_bus &&
         a.dt_inner == b.dt_inner && a.outer_period == b.outer_period && a.voltages == b.voltages &&
         a.q_inj == b.q_inj && a.p_out == b.p_out && a.setpoints == b.setpoints &&
         a.flags == b.flags && a.dispatch_residual == b.dispatch_residual && a.outer == b.outer;
}

std::vector<double> generate_intermittency(const IntermittencySeries& spec, std::uint64_t seed,
                                           const std::string& series_id, std::size_t unit,
                                           int horizon) {
  std::mt19937_64 rng(seed ^ fnv1a(series_id) ^ ((unit + 1) * 0x9E3779B97F4A7C15ULL));
  std::uniform_real_distribution<double> level(spec.low, spec.high);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<double> out(static_cast<std::size_t>(horizon) + 1);
  double current = level(rng);
  for (double& v : out) {
    if (coin(rng) < 1.0 / spec.dwell) current = level(rng);
    v = current;
  }
  return out;
}

std::vector<std::vector<double>> setpoint_schedule(const Scenario& scenario,
                                                   const std::vector<std::string>& pv_ids) {
  std::vector<double> mu(pv_ids.size(), scenario.controller.mu);
  std::vector<std::vector<double>> out;
  out.reserve(static_cast<std::size_t>(scenario.horizon) + 1);
  std::size_t next = 0;
  for (int t = 0; t <= scenario.horizon; ++t) {
    for (; next < scenario.events.size() && scenario.events[next].tick <= t; ++next) {
      const auto* ev = std::get_if<SetPoint>(&scenario.events[next].kind);
      if (ev == nullptr) continue;
      for (std::size_t u = 0; u < pv_ids.size(); ++u) {
        if (ev->units.empty() ||
            std::find(ev->units.begin(), ev->units.end(), pv_ids[u]) != ev->units.end()) {
          mu[u] = ev->mu;
        }
      }
    }
    out.push_back(mu);
  }
  return out;
}

Engine::Engine(const Scenario& scenario, std::unique_ptr<Plant> plant)
    : scenario_(scenario), plant_(std::move(plant)) {
  if (!plant_) throw SchemaError("engine needs a plant");
  scenario_.validate(*plant_);

  const std::vector<PvSite>& sites = plant_->pv_sites();
  units_.resize(sites.size());
  p_.assign(sites.size(), 0.0);
  q_.assign(sites.size(), 0.0);
  for (std::size_t u = 0; u < sites.size(); ++u) {
    units_[u].mu = scenario_.controller.mu;
    const auto it = scenario_.pv_profile.find(sites[u].id);
    if (it != scenario_.pv_profile.end()) {
      units_[u].source = UnitState::Source::kProfile;
      units_[u].profile = &it->second;
    }
  }

  trace_.bus_ids = plant_->bus_ids();
  for (const PvSite& site : sites) {
    trace_.pv_ids.push_back(site.id);
    trace_.pv_bus.push_back(site.bus);
  }
  trace_.dt_inner = scenario_.dt_inner;
  trace_.outer_period = scenario_.outer_period();

  apply_events(0);
  update_real_power(0);
  for (std::size_t u = 0; u < sites.size(); ++u) {
    units_[u].capacity_ref = capacity(sites[u].rating_s, p_[u]);
  }
  const PlantSolution sol = plant_->solve(p_, q_);
  v_ = sol.bus_voltages;

  if (std::holds_alternative<control::Adaptive>(scenario_.controller.kind)) {
    std::vector<double> m_init(sites.size(), scenario_.controller.adaptive.m_init);
    if (scenario_.controller.initial_slope_factor) {
      const Eigen::MatrixXd a = plant_->sensitivity();
      const Eigen::VectorXd zero = Eigen::VectorXd::Zero(a.rows());
      const analysis::StabilityReport report = analysis::stability_report(a, zero);
      for (std::size_t u = 0; u < sites.size(); ++u) {
        const double critical = report.critical_slopes[u];
        if (std::isfinite(critical)) m_init[u] = *scenario_.controller.initial_slope_factor * critical;
        m_init[u] = std::max(m_init[u], scenario_.controller.adaptive.m_floor);
      }
    }
    for (std::size_t u = 0; u < sites.size(); ++u) {
      units_[u].adaptive = adaptation::initial_params(units_[u].mu, m_init[u], sites[u].rating_s, p_[u]);
    }
  }

  if (scenario_.settle_initial) settle();

  trace_.voltages.push_back(v_);
  trace_.q_inj.push_back(q_);
  trace_.p_out.push_back(p_);
  std::vector<double> mu(units_.size());
  for (std::size_t u = 0; u < units_.size(); ++u) mu[u] = units_[u].mu;
  trace_.setpoints.push_back(std::move(mu));
  trace_.flags.push_back(sol.converged ? 0 : kFlagNonConverged);
  trace_.dispatch_residual.push_back(0.0);
}

std::vector<std::size_t> Engine::select_units(const std::vector<std::string>& ids) const {
  std::vector<std::size_t> out;
  const std::vector<PvSite>& sites = plant_->pv_sites();
  for (std::size_t u = 0; u < sites.size(); ++u) {
    if (ids.empty() || std::find(ids.begin(), ids.end(), sites[u].id) != ids.end()) out.push_back(u);
  }
  return out;
}

void Engine::apply_event(const EventKind& kind, int tick) {
  (void)tick;
  if (const auto* ev = std::get_if<SubstationVoltage>(&kind)) {
    plant_->set_substation_voltage(ev->v);
  } else if (const auto* ev = std::get_if<SetPoint>(&kind)) {
    for (std::size_t u : select_units(ev->units)) {
      units_[u].mu = ev->mu;
      units_[u].adaptive.mu = ev->mu;
      control::refresh_cutoffs(units_[u].adaptive);
    }
  } else if (const auto* ev = std::get_if<CloudCover>(&kind)) {
    for (std::size_t u : select_units(ev->units)) {
      units_[u].source = UnitState::Source::kConstant;
      units_[u].multiplier = ev->scale;
    }
  } else if (const auto* ev = std::get_if<Intermittency>(&kind)) {
    const IntermittencySeries& spec = scenario_.series.at(ev->series);
    for (std::size_t u : select_units(ev->units)) {
      units_[u].source = UnitState::Source::kSeries;
      units_[u].series = generate_intermittency(spec, scenario_.seed, ev->series, u, scenario_.horizon);
    }
  } else if (const auto* ev = std::get_if<SwitchChange>(&kind)) {
    plant_->set_switch(ev->line, ev->state);
  } else if (const auto* ev = std::get_if<LoadScale>(&kind)) {
    plant_->set_load_scale(ev->factor);
  }
}

void Engine::apply_events(int tick) {
  while (next_event_ < scenario_.events.size() && scenario_.events[next_event_].tick <= tick) {
    apply_event(scenario_.events[next_event_].kind, tick);
    ++next_event_;
  }
}

void Engine::update_real_power(int tick) {
  const std::vector<PvSite>& sites = plant_->pv_sites();
  const auto t = static_cast<std::size_t>(tick);
  for (std::size_t u = 0; u < sites.size(); ++u) {
    UnitState& unit = units_[u];
    switch (unit.source) {
      case UnitState::Source::kConstant:
        break;
      case UnitState::Source::kProfile:
        unit.multiplier = (*unit.profile)[std::min(t, unit.profile->size() - 1)];
        break;
      case UnitState::Source::kSeries:
        unit.multiplier = unit.series[std::min(t, unit.series.size() - 1)];
        break;
    }
    p_[u] = plant_->pv_in_service(u)
                ? std::min(std::max(sites[u].p_nominal * unit.multiplier, 0.0), sites[u].rating_s)
                : 0.0;
  }
}

double Engine::dispatch(std::size_t u, double v_prev) const {
  const PvSite& site = plant_->pv_sites()[u];
  const UnitState& unit = units_[u];
  const ControllerSettings& c = scenario_.controller;
  const double cap = capacity(site.rating_s, p_[u]);

  auto droop_params = [&]() {
    double slope = c.slope;
    if (c.track_capacity && unit.capacity_ref > 0.0) slope = c.slope * cap / unit.capacity_ref;
    return control::DroopParams::from_slope(unit.mu, c.deadband, slope, -cap, cap);
  };

  double q = unit.q;
  if (std::holds_alternative<control::NoControl>(c.kind)) {
    q = unit.q;
  } else if (std::holds_alternative<control::Conventional>(c.kind)) {
    q = control::droop_dispatch(droop_params(), v_prev);
  } else if (const auto* delayed = std::get_if<control::Delayed>(&c.kind)) {
    q = control::delayed_dispatch(droop_params(), delayed->tau, v_prev, unit.q);
  } else {
    q = control::adaptive_dispatch(unit.adaptive, v_prev);
  }
  return std::min(std::max(q, -cap), cap);
}

void Engine::settle() {
  // damped relaxation onto the inner-law fixed point; the fixed point is the
  // same as for the undamped law, but a locally stable one is reached even
  // when the raw iteration would cycle
  constexpr int kMaxIterations = 5000;
  constexpr double kRelax = 0.25;
  for (int i = 0; i < kMaxIterations; ++i) {
    double residual = 0.0;
    for (std::size_t u = 0; u < units_.size(); ++u) {
      if (!plant_->pv_in_service(u)) continue;
      const double step = dispatch(u, v_[trace_.pv_bus[u]]) - units_[u].q;
      residual = std::max(residual, std::abs(step));
      units_[u].q += kRelax * step;
      q_[u] = units_[u].q;
    }
    const PlantSolution sol = plant_->solve(p_, q_);
    if (!sol.converged) throw NumericalError("initial settle: power flow did not converge");
    v_ = sol.bus_voltages;
    if (residual < 1e-13) return;
  }
  throw NumericalError("initial settle did not reach a fixed point");
}

void Engine::step() {
  if (done()) return;
  const int t = tick_ + 1;
  const std::size_t before = next_event_;
  apply_events(t);
  std::uint8_t flags = next_event_ != before ? kFlagEvent : 0;
  update_real_power(t);

  double residual = 0.0;
  std::vector<double> q_next(units_.size(), 0.0);
  for (std::size_t u = 0; u < units_.size(); ++u) {
    // a unit with no voltage reading from the last tick stays idle
    const double v_prev = v_[trace_.pv_bus[u]];
    if (!plant_->pv_in_service(u) || !(v_prev > 0.0)) continue;
    q_next[u] = dispatch(u, v_prev);
  }
  for (std::size_t u = 0; u < units_.size(); ++u) {
    residual = std::max(residual, std::abs(q_next[u] - units_[u].q));
    units_[u].q = q_next[u];
  }
  q_ = q_next;
  tick_ = t;
  solve_and_record(t, flags, residual);

  const int period = scenario_.outer_period();
  if (std::holds_alternative<control::Adaptive>(scenario_.controller.kind) && t % period == 0) {
    outer_loop(t);
  }
}

void Engine::solve_and_record(int tick, std::uint8_t flags, double residual) {
  (void)tick;
  const PlantSolution sol = plant_->solve(p_, q_);
  if (sol.converged) {
    v_ = sol.bus_voltages;
  } else {
    flags |= kFlagNonConverged;
  }
  trace_.voltages.push_back(v_);
  trace_.q_inj.push_back(q_);
  trace_.p_out.push_back(p_);
  std::vector<double> mu(units_.size());
  for (std::size_t u = 0; u < units_.size(); ++u) mu[u] = units_[u].mu;
  trace_.setpoints.push_back(std::move(mu));
  trace_.flags.push_back(flags);
  trace_.dispatch_residual.push_back(residual);
}

void Engine::outer_loop(int tick) {
  const int period = scenario_.outer_period();
  const auto first = static_cast<std::size_t>(tick - period + 1);
  const std::vector<PvSite>& sites = plant_->pv_sites();
  std::vector<double> window_v(static_cast<std::size_t>(period));
  std::vector<double> window_p(static_cast<std::size_t>(period));
  bool collapsed = false;
  for (std::size_t k = 0; k < window_v.size(); ++k) {
    if (trace_.flags[first + k] & kFlagNonConverged) collapsed = true;
  }
  for (std::size_t u = 0; u < units_.size(); ++u) {
    bool usable = plant_->pv_in_service(u);
    for (std::size_t k = 0; usable && k < window_v.size(); ++k) {
      window_v[k] = trace_.pv_voltage(first + k, u);
      window_p[k] = trace_.p_out[first + k][u];
      if (!(window_v[k] > 0.0)) usable = false;
    }
    if (!usable) continue;
    const adaptation::AdaptiveConfig& cfg = scenario_.controller.adaptive;
    adaptation::WindowStats stats =
        adaptation::window_stats(window_v, units_[u].adaptive.mu, window_p, period, cfg.signed_flicker);
    if (collapsed) {
      // carried-forward samples are not measurements: hold q_p, treat as critical flicker
      stats.sse_avg = 0.0;
      stats.vf = std::numeric_limits<double>::infinity();
    }
    const adaptation::OuterLoopResult result =
        adaptation::outer_loop_apply(units_[u].adaptive, sites[u].rating_s, stats, cfg);
    units_[u].adaptive = result.params;
    trace_.outer.push_back(OuterLoopRecord{tick, u, result.params, result.stats});
  }
  trace_.flags.back() |= kFlagOuterLoop;
}

void Engine::run_to_end() {
  while (!done()) step();
}

SimulationTrace run(const Scenario& scenario, const Plant& plant) {
  Engine engine(scenario, plant.clone());
  engine.run_to_end();
  return engine.take_trace();
}

}  // namespace voltvar::sim
