#include "voltvar/scenario_io.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "voltvar/error.hpp"
#include "voltvar/feeder_io.hpp"

namespace voltvar::sim {

using nlohmann::json;

namespace {

template <typename T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw SchemaError(where + ": field '" + key + "' has the wrong type");
  }
}

std::vector<std::string> units_field(const json& ev) {
  return get_or<std::vector<std::string>>(ev, "units", {}, "event");
}

void check_known_keys(const json& obj, std::initializer_list<const char*> keys, const std::string& where) {
  for (const auto& item : obj.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return item.key() == k; })) {
      throw SchemaError(where + ": unknown field '" + item.key() + "'");
    }
  }
}

control::ControllerKind kind_from_string(const std::string& kind, double tau) {
  if (kind == "none") return control::NoControl{};
  if (kind == "conventional") return control::Conventional{};
  if (kind == "delayed") return control::Delayed{tau};
  if (kind == "adaptive") return control::Adaptive{};
  throw SchemaError("unknown controller kind '" + kind + "'");
}

Event event_from_json(const json& ev) {
  if (!ev.is_object()) throw SchemaError("events must be objects");
  Event e;
  e.tick = get_or<int>(ev, "tick", 0, "event");
  const std::string type = get_or<std::string>(ev, "type", "", "event");
  const std::string where = "event '" + type + "'";
  if (type == "substation_voltage") {
    check_known_keys(ev, {"tick", "type", "value"}, where);
    e.kind = SubstationVoltage{get_or<double>(ev, "value", 1.0, where)};
  } else if (type == "setpoint") {
    check_known_keys(ev, {"tick", "type", "mu", "units"}, where);
    e.kind = SetPoint{get_or<double>(ev, "mu", 1.0, where), units_field(ev)};
  } else if (type == "cloud_cover") {
    check_known_keys(ev, {"tick", "type", "scale", "units"}, where);
    e.kind = CloudCover{get_or<double>(ev, "scale", 1.0, where), units_field(ev)};
  } else if (type == "intermittency") {
    check_known_keys(ev, {"tick", "type", "series", "units"}, where);
    e.kind = Intermittency{get_or<std::string>(ev, "series", "", where), units_field(ev)};
  } else if (type == "switch") {
    check_known_keys(ev, {"tick", "type", "line", "state"}, where);
    e.kind = SwitchChange{get_or<std::string>(ev, "line", "", where),
                          feeder::switch_state_from_string(get_or<std::string>(ev, "state", "closed", where))};
  } else if (type == "load_scale") {
    check_known_keys(ev, {"tick", "type", "factor"}, where);
    e.kind = LoadScale{get_or<double>(ev, "factor", 1.0, where)};
  } else {
    throw SchemaError("unknown event type '" + type + "'");
  }
  return e;
}

json event_to_json(const Event& e) {
  json out = {{"tick", e.tick}, {"type", event_name(e.kind)}};
  if (const auto* ev = std::get_if<SubstationVoltage>(&e.kind)) {
    out["value"] = ev->v;
  } else if (const auto* ev = std::get_if<SetPoint>(&e.kind)) {
    out["mu"] = ev->mu;
    out["units"] = ev->units;
  } else if (const auto* ev = std::get_if<CloudCover>(&e.kind)) {
    out["scale"] = ev->scale;
    out["units"] = ev->units;
  } else if (const auto* ev = std::get_if<Intermittency>(&e.kind)) {
    out["series"] = ev->series;
    out["units"] = ev->units;
  } else if (const auto* ev = std::get_if<SwitchChange>(&e.kind)) {
    out["line"] = ev->line;
    out["state"] = feeder::to_string(ev->state);
  } else if (const auto* ev = std::get_if<LoadScale>(&e.kind)) {
    out["factor"] = ev->factor;
  }
  return out;
}

std::string format_double(double v) {
  std::ostringstream s;
  s << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return s.str();
}

double parse_double(const std::string& text, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw SchemaError("trace line " + std::to_string(line) + ": bad number '" + text + "'");
  }
}

}  // namespace

Scenario scenario_from_json(const json& doc) {
  if (!doc.is_object()) throw SchemaError("scenario: document must be an object");
  check_known_keys(doc,
                   {"name", "feeder", "horizon", "dt_inner", "T_outer", "seed", "settle_initial",
                    "controller", "adaptive", "pv_profile", "series", "events"},
                   "scenario");
  Scenario s;
  s.name = get_or<std::string>(doc, "name", "scenario", "scenario");
  s.feeder = get_or<std::string>(doc, "feeder", "", "scenario");
  s.horizon = get_or<int>(doc, "horizon", s.horizon, "scenario");
  s.dt_inner = get_or<double>(doc, "dt_inner", s.dt_inner, "scenario");
  s.seed = get_or<std::uint64_t>(doc, "seed", s.seed, "scenario");
  s.settle_initial = get_or<bool>(doc, "settle_initial", false, "scenario");

  adaptation::AdaptiveConfig& cfg = s.controller.adaptive;
  cfg.horizon = get_or<int>(doc, "T_outer", cfg.horizon, "scenario");
  if (doc.contains("adaptive")) {
    const json& a = doc.at("adaptive");
    if (!a.is_object()) throw SchemaError("scenario: 'adaptive' must be an object");
    check_known_keys(a,
                     {"k_d", "eps_sse", "eps_vf", "vf_lim", "vf_lim_bar", "delta_vf", "delta_vf_bar",
                      "m_init", "m_floor", "signed_flicker"},
                     "adaptive");
    cfg.k_d = get_or<double>(a, "k_d", cfg.k_d, "adaptive");
    cfg.eps_sse = get_or<double>(a, "eps_sse", cfg.eps_sse, "adaptive");
    cfg.eps_vf = get_or<double>(a, "eps_vf", cfg.eps_vf, "adaptive");
    cfg.vf_lim = get_or<double>(a, "vf_lim", cfg.vf_lim, "adaptive");
    cfg.vf_lim_bar = get_or<double>(a, "vf_lim_bar", cfg.vf_lim_bar, "adaptive");
    cfg.delta_vf = get_or<double>(a, "delta_vf", cfg.delta_vf, "adaptive");
    cfg.delta_vf_bar = get_or<double>(a, "delta_vf_bar", cfg.delta_vf_bar, "adaptive");
    cfg.m_init = get_or<double>(a, "m_init", cfg.m_init, "adaptive");
    cfg.m_floor = get_or<double>(a, "m_floor", cfg.m_floor, "adaptive");
    cfg.signed_flicker = get_or<bool>(a, "signed_flicker", cfg.signed_flicker, "adaptive");
  }
  if (doc.contains("controller")) {
    const json& c = doc.at("controller");
    if (!c.is_object()) throw SchemaError("scenario: 'controller' must be an object");
    check_known_keys(c,
                     {"kind", "tau", "mu", "deadband", "slope", "track_capacity", "initial_slope_factor"},
                     "controller");
    const double tau = get_or<double>(c, "tau", 0.5, "controller");
    s.controller.kind = kind_from_string(get_or<std::string>(c, "kind", "adaptive", "controller"), tau);
    s.controller.mu = get_or<double>(c, "mu", s.controller.mu, "controller");
    s.controller.deadband = get_or<double>(c, "deadband", s.controller.deadband, "controller");
    s.controller.slope = get_or<double>(c, "slope", s.controller.slope, "controller");
    s.controller.track_capacity = get_or<bool>(c, "track_capacity", true, "controller");
    if (c.contains("initial_slope_factor") && !c.at("initial_slope_factor").is_null()) {
      s.controller.initial_slope_factor = get_or<double>(c, "initial_slope_factor", 0.0, "controller");
    }
  }
  if (doc.contains("pv_profile")) {
    for (const auto& item : doc.at("pv_profile").items()) {
      const json& v = item.value();
      if (v.is_number()) {
        s.pv_profile[item.key()] = {v.get<double>()};
      } else if (v.is_array()) {
        s.pv_profile[item.key()] = get_or<std::vector<double>>(doc.at("pv_profile"), item.key().c_str(), {}, "pv_profile");
      } else {
        throw SchemaError("pv_profile '" + item.key() + "' must be a number or an array");
      }
    }
  }
  if (doc.contains("series")) {
    for (const auto& item : doc.at("series").items()) {
      const json& v = item.value();
      const std::string where = "series '" + item.key() + "'";
      check_known_keys(v, {"dwell", "low", "high"}, where);
      IntermittencySeries spec;
      spec.dwell = get_or<double>(v, "dwell", spec.dwell, where);
      spec.low = get_or<double>(v, "low", spec.low, where);
      spec.high = get_or<double>(v, "high", spec.high, where);
      s.series[item.key()] = spec;
    }
  }
  if (doc.contains("events")) {
    if (!doc.at("events").is_array()) throw SchemaError("scenario: 'events' must be an array");
    for (const json& ev : doc.at("events")) s.events.push_back(event_from_json(ev));
    std::stable_sort(s.events.begin(), s.events.end(),
                     [](const Event& a, const Event& b) { return a.tick < b.tick; });
  }
  s.validate();
  return s;
}

json scenario_to_json(const Scenario& s) {
  const adaptation::AdaptiveConfig& cfg = s.controller.adaptive;
  json doc;
  doc["name"] = s.name;
  doc["feeder"] = s.feeder;
  doc["horizon"] = s.horizon;
  doc["dt_inner"] = s.dt_inner;
  doc["T_outer"] = cfg.horizon;
  doc["seed"] = s.seed;
  doc["settle_initial"] = s.settle_initial;
  json c = {{"kind", control::kind_name(s.controller.kind)},
            {"mu", s.controller.mu},
            {"deadband", s.controller.deadband},
            {"slope", s.controller.slope},
            {"track_capacity", s.controller.track_capacity}};
  if (const auto* d = std::get_if<control::Delayed>(&s.controller.kind)) c["tau"] = d->tau;
  if (s.controller.initial_slope_factor) c["initial_slope_factor"] = *s.controller.initial_slope_factor;
  doc["controller"] = c;
  doc["adaptive"] = {{"k_d", cfg.k_d},           {"eps_sse", cfg.eps_sse},
                     {"eps_vf", cfg.eps_vf},     {"vf_lim", cfg.vf_lim},
                     {"vf_lim_bar", cfg.vf_lim_bar}, {"delta_vf", cfg.delta_vf},
                     {"delta_vf_bar", cfg.delta_vf_bar}, {"m_init", cfg.m_init},
                     {"m_floor", cfg.m_floor},   {"signed_flicker", cfg.signed_flicker}};
  doc["pv_profile"] = json::object();
  for (const auto& [id, values] : s.pv_profile) {
    doc["pv_profile"][id] = values.size() == 1 ? json(values.front()) : json(values);
  }
  doc["series"] = json::object();
  for (const auto& [id, spec] : s.series) {
    doc["series"][id] = {{"dwell", spec.dwell}, {"low", spec.low}, {"high", spec.high}};
  }
  doc["events"] = json::array();
  for (const Event& e : s.events) doc["events"].push_back(event_to_json(e));
  return doc;
}

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    json doc;
    in >> doc;
    return doc;
  } catch (const json::parse_error& e) {
    throw SchemaError("'" + path.string() + "': " + e.what());
  }
}

const std::vector<std::string>& override_keys() {
  static const std::vector<std::string> keys = {
      "name",
      "feeder",
      "horizon",
      "dt_inner",
      "T_outer",
      "seed",
      "settle_initial",
      "controller.kind",
      "controller.tau",
      "controller.mu",
      "controller.deadband",
      "controller.slope",
      "controller.track_capacity",
      "controller.initial_slope_factor",
      "adaptive.k_d",
      "adaptive.eps_sse",
      "adaptive.eps_vf",
      "adaptive.vf_lim",
      "adaptive.vf_lim_bar",
      "adaptive.delta_vf",
      "adaptive.delta_vf_bar",
      "adaptive.m_init",
      "adaptive.m_floor",
      "adaptive.signed_flicker",
  };
  return keys;
}

void apply_override(json& doc, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw SchemaError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  const auto& keys = override_keys();
  if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
    throw SchemaError("unknown override key '" + key + "'");
  }
  json value;
  try {
    value = json::parse(text);
    if (value.is_structured()) value = text;
  } catch (const json::parse_error&) {
    value = text;
  }
  const std::size_t dot = key.find('.');
  if (dot == std::string::npos) {
    doc[key] = value;
  } else {
    json& section = doc[key.substr(0, dot)];
    if (section.is_null()) section = json::object();
    section[key.substr(dot + 1)] = value;
  }
}

json resolve_scenario_json(const std::string& ref) {
  const std::string prefix = "presets/";
  if (ref.rfind(prefix, 0) == 0) {
    const std::string name = ref.substr(prefix.size());
    const auto names = preset_names();
    if (std::find(names.begin(), names.end(), name) != names.end()) return preset_json(name);
  } else {
    const auto names = preset_names();
    if (std::find(names.begin(), names.end(), ref) != names.end() && !std::filesystem::exists(ref)) {
      return preset_json(ref);
    }
  }
  return load_json_file(ref);
}

void write_trace_csv(const SimulationTrace& trace, std::ostream& out) {
  out << "tick,bus,V_pu,q_inj_pu,p_out_pu,flags\n";
  std::vector<double> q(trace.bus_ids.size());
  std::vector<double> p(trace.bus_ids.size());
  for (std::size_t t = 0; t < trace.ticks(); ++t) {
    std::fill(q.begin(), q.end(), 0.0);
    std::fill(p.begin(), p.end(), 0.0);
    for (std::size_t u = 0; u < trace.pv_ids.size(); ++u) {
      q[trace.pv_bus[u]] += trace.q_inj[t][u];
      p[trace.pv_bus[u]] += trace.p_out[t][u];
    }
    for (std::size_t b = 0; b < trace.bus_ids.size(); ++b) {
      out << t << ',' << trace.bus_ids[b] << ',' << format_double(trace.voltages[t][b]) << ','
          << format_double(q[b]) << ',' << format_double(p[b]) << ','
          << static_cast<int>(trace.flags[t]) << '\n';
    }
  }
}

void write_trace_csv(const SimulationTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  write_trace_csv(trace, out);
}

SimulationTrace read_trace_csv(std::istream& in, const std::vector<PvSite>& sites, double dt_inner,
                               int outer_period) {
  std::string line;
  if (!std::getline(in, line) || line != "tick,bus,V_pu,q_inj_pu,p_out_pu,flags") {
    throw SchemaError("trace: unexpected header");
  }
  SimulationTrace trace;
  trace.dt_inner = dt_inner;
  trace.outer_period = outer_period;
  std::vector<double> q_bus;
  std::vector<double> p_bus;
  std::size_t line_no = 1;
  std::size_t bus_pos = 0;
  long current_tick = -1;
  bool first_tick_done = false;

  auto finish_tick = [&]() {
    std::vector<double> q(sites.size(), 0.0);
    std::vector<double> p(sites.size(), 0.0);
    std::vector<bool> used(trace.bus_ids.size(), false);
    for (std::size_t u = 0; u < sites.size(); ++u) {
      const std::size_t b = sites[u].bus;
      if (b >= trace.bus_ids.size()) throw SchemaError("trace: pv unit bus out of range");
      if (!used[b]) {
        q[u] = q_bus[b];
        p[u] = p_bus[b];
        used[b] = true;
      }
    }
    trace.q_inj.push_back(std::move(q));
    trace.p_out.push_back(std::move(p));
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw SchemaError("trace line " + std::to_string(line_no) + ": expected 6 columns");
    const long tick = std::stol(cells[0]);
    if (tick != current_tick) {
      if (current_tick >= 0) {
        if (!first_tick_done) first_tick_done = true;
        if (bus_pos != trace.bus_ids.size()) throw SchemaError("trace: ragged tick block");
        finish_tick();
      }
      if (tick != current_tick + 1) throw SchemaError("trace: ticks must be consecutive from 0");
      current_tick = tick;
      bus_pos = 0;
      trace.voltages.emplace_back();
      trace.flags.push_back(static_cast<std::uint8_t>(std::stoi(cells[5])));
      q_bus.clear();
      p_bus.clear();
    }
    if (!first_tick_done) {
      trace.bus_ids.push_back(cells[1]);
    } else if (bus_pos >= trace.bus_ids.size() || trace.bus_ids[bus_pos] != cells[1]) {
      throw SchemaError("trace line " + std::to_string(line_no) + ": bus order differs from tick 0");
    }
    trace.voltages.back().push_back(parse_double(cells[2], line_no));
    q_bus.push_back(parse_double(cells[3], line_no));
    p_bus.push_back(parse_double(cells[4], line_no));
    ++bus_pos;
  }
  if (current_tick < 0) throw SchemaError("trace: no data rows");
  if (bus_pos != trace.bus_ids.size()) throw SchemaError("trace: ragged tick block");
  finish_tick();

  for (const PvSite& site : sites) {
    trace.pv_ids.push_back(site.id);
    trace.pv_bus.push_back(site.bus);
  }
  trace.dispatch_residual.assign(trace.ticks(), 0.0);
  for (std::size_t t = 1; t < trace.ticks(); ++t) {
    double r = 0.0;
    for (std::size_t u = 0; u < sites.size(); ++u) {
      r = std::max(r, std::abs(trace.q_inj[t][u] - trace.q_inj[t - 1][u]));
    }
    trace.dispatch_residual[t] = r;
  }
  return trace;
}

SimulationTrace read_trace_csv(const std::filesystem::path& path, const std::vector<PvSite>& sites,
                               double dt_inner, int outer_period) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return read_trace_csv(in, sites, dt_inner, outer_period);
}

void write_params_csv(const SimulationTrace& trace, std::ostream& out) {
  out << "tick,unit,bus,m_p,q_p,q_min_p,q_max_p,v_min_p,v_max_p,mu,sse_avg,vf,p_pv_avg\n";
  for (const OuterLoopRecord& r : trace.outer) {
    const control::AdaptiveParams& p = r.params;
    out << r.tick << ',' << trace.pv_ids[r.unit] << ',' << trace.bus_ids[trace.pv_bus[r.unit]] << ','
        << format_double(p.slope) << ',' << format_double(p.q_offset) << ',' << format_double(p.q_min)
        << ',' << format_double(p.q_max) << ',' << format_double(p.v_min) << ','
        << format_double(p.v_max) << ',' << format_double(p.mu) << ','
        << format_double(r.stats.sse_avg) << ',' << format_double(r.stats.vf) << ','
        << format_double(r.stats.p_pv_avg) << '\n';
  }
}

json metrics_to_json(const MetricsReport& report, const SimulationTrace& trace) {
  json doc = {{"msse_percent", report.msse}, {"vvi", report.vvi}, {"fc", report.fc}};
  doc["per_unit"] = json::array();
  for (std::size_t u = 0; u < trace.pv_ids.size(); ++u) {
    doc["per_unit"].push_back({{"unit", trace.pv_ids[u]},
                               {"msse_percent", report.msse_per_unit[u]},
                               {"fc", report.fc_per_unit[u]}});
  }
  doc["vvi_per_bus"] = json::object();
  for (std::size_t b = 0; b < trace.bus_ids.size(); ++b) {
    doc["vvi_per_bus"][trace.bus_ids[b]] = report.vvi_per_bus[b];
  }
  doc["non_converged_ticks"] =
      std::count_if(trace.flags.begin(), trace.flags.end(), [](std::uint8_t f) { return (f & kFlagNonConverged) != 0; });
  return doc;
}

void print_metrics_table(const MetricsReport& report, const SimulationTrace& trace, std::ostream& out) {
  out << std::fixed << std::setprecision(4);
  out << "MSSE " << report.msse << " %   FC " << report.fc << "   VVI " << report.vvi << '\n';
  out << std::left << std::setw(12) << "unit" << std::right << std::setw(12) << "MSSE %" << std::setw(8)
      << "FC" << '\n';
  for (std::size_t u = 0; u < trace.pv_ids.size(); ++u) {
    out << std::left << std::setw(12) << trace.pv_ids[u] << std::right << std::setw(12)
        << report.msse_per_unit[u] << std::setw(8) << report.fc_per_unit[u] << '\n';
  }
  out << std::defaultfloat;
}

}  // namespace voltvar::sim
