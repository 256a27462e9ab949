#pragma once

// Outer-loop parameter dispatch for the adaptive controller. Once per horizon
// of T inner ticks each inverter summarizes its own window of voltages and
// real-power output, then:
//   1. shifts its var offset q_p against the average set-point error,
//   2. moves its slope m_p according to the flicker zone of the window,
//   3. resizes its var limits to the capacity left over by real power,
//   4. recomputes the voltage cutoffs consistent with the new curve.
// Nothing here looks at other inverters.

#include <span>

#include "voltvar/control.hpp"

namespace voltvar::adaptation {

struct AdaptiveConfig {
  int horizon = 10;          // T, inner ticks per outer iteration
  double k_d = 4.0;          // pu-var per pu-volt
  double eps_sse = 0.005;    // pu volt
  double eps_vf = 0.01;      // percent
  double vf_lim = 0.03;      // percent, borderline flicker
  double vf_lim_bar = 0.09;  // percent, maximum flicker
  double delta_vf = 0.5;
  double delta_vf_bar = 1.0;
  double m_init = 1.0;
  double m_floor = 0.1;
  // Sum signed voltage differences in the flicker measure instead of their
  // magnitudes.
  bool signed_flicker = false;

  void validate() const;
};

struct WindowStats {
  double sse_avg = 0.0;   // signed, pu volt
  double vf = 0.0;        // percent
  double p_pv_avg = 0.0;  // pu
};

// `voltages` and `p_pv` must both hold exactly `horizon` samples.
// vf = 100/T * sum_{t>=2} |V_t - V_{t-1}| / V_t.
WindowStats window_stats(std::span<const double> voltages, double mu, std::span<const double> p_pv,
                         int horizon, bool signed_flicker = false);

double strategy1_update_qp(double q_p_prev, const WindowStats& stats, const AdaptiveConfig& cfg);

double strategy2_update_slope(double m_prev, const WindowStats& stats, const AdaptiveConfig& cfg);

enum class FlickerZone { kCritical, kSubcritical, kSafe, kRelaxed };
FlickerZone flicker_zone(double vf, const AdaptiveConfig& cfg);

struct VarLimits {
  double q_min;
  double q_max;
};

VarLimits capacity_limits(double rating_s, double p_pv_avg);

struct OuterLoopResult {
  control::AdaptiveParams params;
  WindowStats stats;
};

// One full parameter dispatch for a single inverter.
OuterLoopResult outer_loop_step(const control::AdaptiveParams& current, double rating_s,
                                std::span<const double> voltages, std::span<const double> p_pv,
                                const AdaptiveConfig& cfg);

// Steps 2-5 of outer_loop_step on precomputed window statistics.
OuterLoopResult outer_loop_apply(const control::AdaptiveParams& current, double rating_s,
                                 const WindowStats& stats, const AdaptiveConfig& cfg);

// Starting parameters: q_p = 0, slope m_init, limits from the current output.
control::AdaptiveParams initial_params(double mu, double m_init, double rating_s, double p_pv);

}  // namespace voltvar::adaptation
