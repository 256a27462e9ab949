#pragma once

// Run-level performance indices:
//   MSSE  mean |V - mu| over PV buses and ticks, in percent
//   FC    (unit, window) pairs whose flicker exceeds vf_lim
//   VVI   (bus, tick) samples outside ANSI range A, or outside range B for at
//         least range_b_seconds without interruption
// De-energized samples (V = 0) are skipped everywhere.

#include <vector>

#include "voltvar/sim.hpp"

namespace voltvar::sim {

struct MetricsLimits {
  double vf_lim = 0.03;  // percent
  int window = 10;       // ticks per flicker window
  bool signed_flicker = false;
  double range_a_low = 0.90;
  double range_a_high = 1.06;
  double range_b_low = 0.95;
  double range_b_high = 1.05;
  double range_b_seconds = 300.0;
};

// Flicker settings taken from the scenario's adaptive configuration.
MetricsLimits limits_for(const Scenario& scenario);

struct MetricsReport {
  double msse = 0.0;  // percent
  long vvi = 0;
  long fc = 0;
  std::vector<double> msse_per_unit;
  std::vector<long> fc_per_unit;
  std::vector<long> vvi_per_bus;
};

// `mu` is indexed [tick][unit]; ticks 1..end are scored, tick 0 is the
// initial state.
MetricsReport metrics(const SimulationTrace& trace, const std::vector<std::vector<double>>& mu,
                      const MetricsLimits& limits);
MetricsReport metrics(const SimulationTrace& trace, double mu, const MetricsLimits& limits);

// Per-window set-point error for one unit, the quantity the outer loop acts
// on: the window mean and the value at the window's last tick.
struct WindowError {
  int end_tick = 0;
  double sse_avg = 0.0;
  double sse_end = 0.0;
};

std::vector<WindowError> window_errors(const SimulationTrace& trace,
                                       const std::vector<std::vector<double>>& mu, std::size_t unit,
                                       int window);

}  // namespace voltvar::sim
