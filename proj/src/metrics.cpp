#include "voltvar/metrics.hpp"

#include <cmath>

#include "voltvar/error.hpp"

namespace voltvar::sim {

MetricsLimits limits_for(const Scenario& scenario) {
  MetricsLimits limits;
  limits.vf_lim = scenario.controller.adaptive.vf_lim;
  limits.window = scenario.outer_period();
  limits.signed_flicker = scenario.controller.adaptive.signed_flicker;
  return limits;
}

MetricsReport metrics(const SimulationTrace& trace, const std::vector<std::vector<double>>& mu,
                      const MetricsLimits& limits) {
  const std::size_t ticks = trace.ticks();
  const std::size_t units = trace.pv_ids.size();
  if (mu.size() < ticks) throw SchemaError("set-point schedule shorter than the trace");
  if (limits.window < 2) throw SchemaError("flicker window must be at least 2 ticks");

  MetricsReport report;
  report.msse_per_unit.assign(units, 0.0);
  report.fc_per_unit.assign(units, 0);
  report.vvi_per_bus.assign(trace.bus_ids.size(), 0);

  double msse_total = 0.0;
  std::size_t msse_units = 0;
  for (std::size_t u = 0; u < units; ++u) {
    double sum = 0.0;
    std::size_t samples = 0;
    for (std::size_t t = 1; t < ticks; ++t) {
      const double v = trace.pv_voltage(t, u);
      if (!(v > 0.0)) continue;
      sum += std::abs(v - mu[t][u]);
      ++samples;
    }
    if (samples == 0) continue;
    report.msse_per_unit[u] = 100.0 * sum / static_cast<double>(samples);
    msse_total += report.msse_per_unit[u];
    ++msse_units;
  }
  report.msse = msse_units == 0 ? 0.0 : msse_total / static_cast<double>(msse_units);

  const auto window = static_cast<std::size_t>(limits.window);
  std::vector<double> v(window);
  std::vector<double> p(window, 0.0);
  for (std::size_t u = 0; u < units; ++u) {
    for (std::size_t start = 1; start + window <= ticks; start += window) {
      bool usable = true;
      for (std::size_t k = 0; k < window; ++k) {
        v[k] = trace.pv_voltage(start + k, u);
        if (!(v[k] > 0.0)) usable = false;
      }
      if (!usable) continue;
      const adaptation::WindowStats stats =
          adaptation::window_stats(v, 0.0, p, limits.window, limits.signed_flicker);
      if (stats.vf > limits.vf_lim) ++report.fc_per_unit[u];
    }
    report.fc += report.fc_per_unit[u];
  }

  const double b_ticks = limits.range_b_seconds / trace.dt_inner;
  for (std::size_t b = 0; b < trace.bus_ids.size(); ++b) {
    long run = 0;
    for (std::size_t t = 1; t < ticks; ++t) {
      const double vb = trace.voltages[t][b];
      if (!(vb > 0.0)) {
        run = 0;
        continue;
      }
      const bool outside_a = vb < limits.range_a_low || vb > limits.range_a_high;
      const bool outside_b = vb < limits.range_b_low || vb > limits.range_b_high;
      run = outside_b ? run + 1 : 0;
      if (outside_a || (outside_b && static_cast<double>(run) >= b_ticks)) ++report.vvi_per_bus[b];
    }
    report.vvi += report.vvi_per_bus[b];
  }
  return report;
}

MetricsReport metrics(const SimulationTrace& trace, double mu, const MetricsLimits& limits) {
  const std::vector<std::vector<double>> schedule(trace.ticks(),
                                                  std::vector<double>(trace.pv_ids.size(), mu));
  return metrics(trace, schedule, limits);
}

std::vector<WindowError> window_errors(const SimulationTrace& trace,
                                       const std::vector<std::vector<double>>& mu, std::size_t unit,
                                       int window) {
  std::vector<WindowError> out;
  const auto w = static_cast<std::size_t>(window);
  for (std::size_t start = 1; start + w <= trace.ticks(); start += w) {
    double sum = 0.0;
    for (std::size_t k = 0; k < w; ++k) sum += trace.pv_voltage(start + k, unit) - mu[start + k][unit];
    const std::size_t end = start + w - 1;
    out.push_back(WindowError{static_cast<int>(end), sum / static_cast<double>(w),
                              trace.pv_voltage(end, unit) - mu[end][unit]});
  }
  return out;
}

}  // namespace voltvar::sim
