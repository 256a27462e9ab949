// voltvar: run scenarios, analyze stability, sweep parameters, list presets.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "voltvar/analysis.hpp"
#include "voltvar/error.hpp"
#include "voltvar/feeder_io.hpp"
#include "voltvar/metrics.hpp"
#include "voltvar/plant.hpp"
#include "voltvar/scenario_io.hpp"
#include "voltvar/sim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace voltvar;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitUnstable = 3;
constexpr int kExitIo = 4;

struct CommonOptions {
  std::string feeder;
  std::string scenario;
  std::string out;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

struct Loaded {
  json doc;
  sim::Scenario scenario;
  feeder::FeederModel model;
};

Loaded load(const CommonOptions& opts, const std::string& fallback_scenario) {
  const std::string ref = opts.scenario.empty() ? fallback_scenario : opts.scenario;
  if (ref.empty()) throw SchemaError("--scenario is required");
  Loaded out;
  out.doc = sim::resolve_scenario_json(ref);
  for (const std::string& o : opts.overrides) sim::apply_override(out.doc, o);
  if (opts.seed) out.doc["seed"] = *opts.seed;
  if (!opts.feeder.empty()) out.doc["feeder"] = opts.feeder;
  out.scenario = sim::scenario_from_json(out.doc);
  if (out.scenario.feeder.empty()) throw SchemaError("no feeder given (use --feeder or the scenario's 'feeder')");
  out.model = feeder::resolve_feeder(out.scenario.feeder);
  return out;
}

fs::path output_dir(const CommonOptions& opts) {
  if (!opts.out.empty()) return opts.out;
  if (const char* env = std::getenv("VOLTVAR_SIM_OUT"); env != nullptr && *env != '\0') return env;
  return "voltvar_out";
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
}

void write_run_outputs(const fs::path& dir, const sim::Scenario& scenario, const json& doc,
                       const sim::SimulationTrace& trace, const sim::MetricsReport& report) {
  ensure_dir(dir);
  sim::write_trace_csv(trace, dir / "trace.csv");
  std::ostringstream params;
  sim::write_params_csv(trace, params);
  write_text(dir / "params.csv", params.str());
  json m = sim::metrics_to_json(report, trace);
  m["scenario"] = scenario.name;
  write_text(dir / "metrics.json", m.dump(2) + "\n");
  write_text(dir / "scenario.json", doc.dump(2) + "\n");
}

int cmd_run(const CommonOptions& opts) {
  const Loaded in = load(opts, "");
  const sim::FeederPlant plant(in.model);
  const sim::SimulationTrace trace = sim::run(in.scenario, plant);
  const sim::MetricsReport report = sim::metrics(trace, trace.setpoints, sim::limits_for(in.scenario));
  const fs::path dir = output_dir(opts);
  write_run_outputs(dir, in.scenario, sim::scenario_to_json(in.scenario), trace, report);
  std::cout << "scenario " << in.scenario.name << " on " << in.model.name << ", "
            << control::kind_name(in.scenario.controller.kind) << ", " << trace.ticks() - 1 << " ticks\n";
  sim::print_metrics_table(report, trace, std::cout);
  std::cout << "wrote " << (dir / "trace.csv").string() << '\n';
  return kExitOk;
}

std::string format_vector(const std::vector<double>& v) {
  std::ostringstream s;
  s << '[';
  for (std::size_t i = 0; i < v.size(); ++i) s << (i ? ", " : "") << v[i];
  s << ']';
  return s.str();
}

int cmd_analyze(const CommonOptions& opts, bool as_json) {
  Loaded in = load(opts, "presets/fig10a");
  sim::Scenario base = in.scenario;
  base.controller.kind = control::NoControl{};
  base.settle_initial = false;
  const sim::Engine engine(base, std::make_unique<sim::FeederPlant>(in.model));
  const Eigen::MatrixXd full = engine.plant().sensitivity();

  std::vector<std::size_t> active;
  for (std::size_t u = 0; u < engine.plant().pv_sites().size(); ++u) {
    if (engine.plant().pv_in_service(u)) active.push_back(u);
  }
  if (active.empty()) throw SchemaError("no energized PV units at the operating point");
  const auto n = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = full(active[i], active[j]);
  }
  const Eigen::VectorXd slopes = Eigen::VectorXd::Constant(n, in.scenario.controller.slope);
  const Eigen::VectorXd k_d = Eigen::VectorXd::Constant(n, in.scenario.controller.adaptive.k_d);

  std::string op_id = in.model.name + "@" + in.scenario.name;
  const analysis::StabilityReport stab = analysis::stability_report(a, slopes, op_id);
  const analysis::ConvergenceReport conv = analysis::outer_b_matrix(a, slopes, k_d);
  const bool ok = stab.stable_spectral && conv.converges;

  std::vector<std::string> ids;
  for (std::size_t u : active) ids.push_back(engine.plant().pv_sites()[u].id);

  if (as_json) {
    json doc;
    doc["operating_point"] = op_id;
    doc["units"] = ids;
    doc["slope"] = in.scenario.controller.slope;
    doc["k_d"] = in.scenario.controller.adaptive.k_d;
    json rows = json::array();
    json brows = json::array();
    for (Eigen::Index i = 0; i < n; ++i) {
      std::vector<double> r(n), br(n);
      for (Eigen::Index j = 0; j < n; ++j) {
        r[j] = a(i, j);
        br[j] = conv.b_matrix(i, j);
      }
      rows.push_back(r);
      brows.push_back(br);
    }
    doc["sensitivity"] = rows;
    doc["stability"] = {{"rho_ma", stab.rho_ma},
                        {"row_sum_margins", stab.row_sum_margins},
                        {"stable_sufficient", stab.stable_sufficient},
                        {"stable_spectral", stab.stable_spectral}};
    json crit = json::array();
    for (double c : stab.critical_slopes) crit.push_back(std::isfinite(c) ? json(c) : json(nullptr));
    doc["stability"]["critical_slopes"] = crit;
    doc["convergence"] = {{"b_matrix", brows}, {"rho_b", conv.rho_b}, {"converges", conv.converges}};
    if (conv.b_scalar) doc["convergence"]["b_scalar"] = *conv.b_scalar;
    if (conv.k_d_upper_scalar) doc["convergence"]["k_d_upper_scalar"] = *conv.k_d_upper_scalar;
    doc["stable"] = ok;
    std::cout << doc.dump(2) << '\n';
  } else {
    std::cout << std::setprecision(6);
    std::cout << "operating point   " << op_id << '\n';
    std::cout << "units             ";
    for (const auto& id : ids) std::cout << id << ' ';
    std::cout << "\nslope m           " << in.scenario.controller.slope << '\n';
    std::cout << "k_d               " << in.scenario.controller.adaptive.k_d << '\n';
    std::cout << "sensitivity A\n" << a << '\n';
    std::cout << "stability\n";
    std::cout << "  rho(MA)         " << stab.rho_ma << '\n';
    std::cout << "  critical slopes " << format_vector(stab.critical_slopes) << '\n';
    std::cout << "  row margins     " << format_vector(stab.row_sum_margins) << '\n';
    std::cout << "  sufficient      " << (stab.stable_sufficient ? "yes" : "no") << '\n';
    std::cout << "  stable          " << (stab.stable_spectral ? "yes" : "no") << '\n';
    std::cout << "convergence\n";
    std::cout << "  B\n" << conv.b_matrix << '\n';
    std::cout << "  rho(B)          " << conv.rho_b << '\n';
    if (conv.b_scalar) std::cout << "  b               " << *conv.b_scalar << '\n';
    if (conv.k_d_upper_scalar) std::cout << "  k_d upper       " << *conv.k_d_upper_scalar << '\n';
    std::cout << "  converges       " << (conv.converges ? "yes" : "no") << '\n';
    std::cout << (ok ? "STABLE" : "UNSTABLE") << '\n';
  }
  return ok ? kExitOk : kExitUnstable;
}

std::vector<std::string> sweep_keys(const std::string& param) {
  if (param == "k_d") return {"adaptive.k_d"};
  if (param == "m") return {"controller.slope", "adaptive.m_init"};
  if (param == "tau") return {"controller.tau"};
  if (param == "T") return {"T_outer"};
  throw SchemaError("unknown sweep parameter '" + param + "' (expected k_d, m, tau or T)");
}

std::string value_label(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

int cmd_sweep(const CommonOptions& opts, const std::string& param, const std::vector<double>& values,
              unsigned jobs, bool linearize) {
  if (values.empty()) throw SchemaError("sweep needs at least one value");
  const std::vector<std::string> keys = sweep_keys(param);
  const Loaded in = load(opts, "");

  std::unique_ptr<sim::Plant> proto;
  if (linearize) {
    sim::Scenario base = in.scenario;
    base.controller.kind = control::NoControl{};
    base.settle_initial = false;
    const sim::Engine engine(base, std::make_unique<sim::FeederPlant>(in.model));
    const auto& fp = dynamic_cast<const sim::FeederPlant&>(engine.plant());
    proto = std::make_unique<sim::LinearPlant>(sim::LinearPlant::linearize(fp.model(), fp.last_solution()));
  } else {
    proto = std::make_unique<sim::FeederPlant>(in.model);
  }

  struct RunResult {
    sim::Scenario scenario;
    json doc;
    sim::SimulationTrace trace;
    sim::MetricsReport report;
  };
  std::vector<sim::Scenario> scenarios;
  std::vector<json> docs;
  for (double v : values) {
    json doc = in.doc;
    for (const std::string& key : keys) sim::apply_override(doc, key + "=" + value_label(v));
    doc["name"] = in.scenario.name + "_" + param + "_" + value_label(v);
    scenarios.push_back(sim::scenario_from_json(doc));
    docs.push_back(doc);
  }

  std::vector<RunResult> results(values.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&]() {
    for (std::size_t i = next++; i < values.size(); i = next++) {
      try {
        RunResult r{scenarios[i], docs[i], sim::run(scenarios[i], *proto), {}};
        r.report = sim::metrics(r.trace, r.trace.setpoints, sim::limits_for(r.scenario));
        results[i] = std::move(r);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(values.size())));
  std::vector<std::thread> threads;
  for (unsigned t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  for (std::thread& t : threads) t.join();
  if (error) std::rethrow_exception(error);

  const fs::path dir = output_dir(opts);
  ensure_dir(dir);
  std::ostringstream merged;
  merged << std::setprecision(17);
  merged << "param,value,window,end_tick,unit,sse_avg,sse_end\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    const RunResult& r = results[i];
    write_run_outputs(dir / (param + "_" + value_label(values[i])), r.scenario, r.doc, r.trace, r.report);
    for (std::size_t u = 0; u < r.trace.pv_ids.size(); ++u) {
      const auto errors = sim::window_errors(r.trace, r.trace.setpoints, u, r.trace.outer_period);
      for (std::size_t w = 0; w < errors.size(); ++w) {
        merged << param << ',' << values[i] << ',' << w + 1 << ',' << errors[w].end_tick << ','
               << r.trace.pv_ids[u] << ',' << errors[w].sse_avg << ',' << errors[w].sse_end << '\n';
      }
    }
    std::cout << param << " = " << value_label(values[i]) << ": MSSE " << r.report.msse << " %, FC "
              << r.report.fc << ", VVI " << r.report.vvi << '\n';
  }
  write_text(dir / "sweep.csv", merged.str());
  std::cout << "wrote " << (dir / "sweep.csv").string() << '\n';
  return kExitOk;
}

int cmd_presets(const std::string& show, const std::string& export_dir) {
  if (!show.empty()) {
    std::cout << sim::preset_json(show).dump(2) << '\n';
    return kExitOk;
  }
  if (!export_dir.empty()) {
    const fs::path root(export_dir);
    ensure_dir(root / "presets");
    ensure_dir(root / "feeders");
    for (const std::string& name : sim::preset_names()) {
      write_text(root / "presets" / (name + ".json"), sim::preset_json(name).dump(2) + "\n");
    }
    for (const std::string& name : feeder::builtin_feeder_names()) {
      feeder::save_feeder(feeder::builtin_feeder(name), root / "feeders" / (name + ".json"));
    }
    std::cout << "exported presets and feeders to " << root.string() << '\n';
    return kExitOk;
  }
  for (const std::string& name : sim::preset_names()) std::cout << name << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Volt/VAR droop and adaptive inverter control simulator"};
  app.require_subcommand(1);

  CommonOptions opts;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--feeder", opts.feeder, "Feeder JSON file or built-in feeder name");
    sub->add_option("--scenario", opts.scenario, "Scenario JSON file, presets/<name> or preset name");
    sub->add_option("--out", opts.out, "Output directory (default $VOLTVAR_SIM_OUT, then ./voltvar_out)");
    sub->add_option("--set", opts.overrides, "Override a scenario field, key=value (repeatable)");
    sub->add_option("--seed", opts.seed, "Random seed");
  };

  CLI::App* run = app.add_subcommand("run", "Simulate a scenario and write trace, params and metrics");
  add_common(run);

  bool as_json = false;
  CLI::App* analyze = app.add_subcommand("analyze", "Stability and outer-loop convergence at the base point");
  add_common(analyze);
  analyze->add_flag("--json", as_json, "Print the report as JSON");

  std::string param;
  std::vector<double> values;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  bool linearize = false;
  CLI::App* sweep = app.add_subcommand("sweep", "Run one simulation per parameter value");
  add_common(sweep);
  sweep->add_option("--param", param, "k_d, m, tau or T")->required();
  sweep->add_option("--values", values, "Values to sweep")->required()->delimiter(',');
  sweep->add_option("--jobs", jobs, "Parallel runs")->check(CLI::PositiveNumber);
  sweep->add_flag("--linearize", linearize, "Use the linearized plant at the tick-0 operating point");

  std::string show;
  std::string export_dir;
  CLI::App* presets = app.add_subcommand("presets", "List, show or export built-in presets");
  presets->add_option("--show", show, "Print one preset");
  presets->add_option("--export", export_dir, "Write presets/ and feeders/ JSON under this directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run) return cmd_run(opts);
    if (*analyze) return cmd_analyze(opts, as_json);
    if (*sweep) return cmd_sweep(opts, param, values, jobs, linearize);
    if (*presets) return cmd_presets(show, export_dir);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUnstable;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
