#pragma once

// Inner-loop var dispatch laws. Voltages in pu volt, vars in pu on the system
// base, slopes in pu-var per pu-volt. Every law is a pure function of the
// local bus voltage and the unit's own parameters.

#include <limits>
#include <variant>

namespace voltvar::control {

// Piecewise-linear droop curve with deadband and saturation.
struct DroopParams {
  double mu = 1.0;
  double deadband = 0.0;
  double slope = 0.0;
  double q_min = 0.0;
  double q_max = 0.0;
  double v_min = -std::numeric_limits<double>::infinity();
  double v_max = std::numeric_limits<double>::infinity();

  // Derives the slope from the four set-points. Throws SchemaError when the
  // two halves of the curve disagree on the slope by more than 1e-9.
  static DroopParams from_setpoints(double mu, double deadband, double v_min, double v_max,
                                    double q_min, double q_max);
  // Derives the voltage cutoffs from a slope. A zero slope puts the cutoffs
  // at -inf/+inf.
  static DroopParams from_slope(double mu, double deadband, double slope, double q_min,
                                double q_max);

  void validate() const;
};

double droop_dispatch(const DroopParams& params, double v);

// Droop followed by a delay block: clamp(droop(v) + tau * q_prev).
double delayed_dispatch(const DroopParams& params, double tau, double v, double q_prev);

// Parameters of the shifted droop law q = P[q_p - m_p (v - mu)]. No deadband.
struct AdaptiveParams {
  double slope = 1.0;     // m_p
  double q_offset = 0.0;  // q_p
  double q_min = 0.0;
  double q_max = 0.0;
  double v_min = -std::numeric_limits<double>::infinity();
  double v_max = std::numeric_limits<double>::infinity();
  double mu = 1.0;

  void validate() const;
};

double adaptive_dispatch(const AdaptiveParams& params, double v);

struct VoltageCutoffs {
  double v_min;
  double v_max;
};

// Voltages at which the shifted curve meets q_max and q_min. A zero slope maps
// to the infinite sentinels.
VoltageCutoffs slope_to_cutoffs(double slope, double q_offset, double q_min, double q_max,
                                double mu);

// Inverse of slope_to_cutoffs using the upper half of the curve.
double cutoffs_to_slope(const VoltageCutoffs& cutoffs, double q_offset, double q_max, double mu);

// Recomputes params.v_min / params.v_max from the other fields.
void refresh_cutoffs(AdaptiveParams& params);

struct NoControl {};
struct Conventional {};
struct Delayed {
  double tau = 0.5;
};
struct Adaptive {};

using ControllerKind = std::variant<NoControl, Conventional, Delayed, Adaptive>;

const char* kind_name(const ControllerKind& kind);

}  // namespace voltvar::control
