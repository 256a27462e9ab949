#include "voltvar/control.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "voltvar/error.hpp"

namespace voltvar::control {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double clamp(double q, double lo, double hi) { return std::min(std::max(q, lo), hi); }

}  // namespace

DroopParams DroopParams::from_setpoints(double mu, double deadband, double v_min, double v_max,
                                        double q_min, double q_max) {
  DroopParams p;
  p.mu = mu;
  p.deadband = deadband;
  p.v_min = v_min;
  p.v_max = v_max;
  p.q_min = q_min;
  p.q_max = q_max;
  const double upper = q_max / (mu - deadband / 2.0 - v_min);
  const double lower = q_min / (mu + deadband / 2.0 - v_max);
  if (!(std::abs(upper - lower) <= 1e-9)) {
    throw SchemaError("droop set-points imply different slopes: " + std::to_string(upper) +
                      " vs " + std::to_string(lower));
  }
  p.slope = upper;
  p.validate();
  return p;
}

DroopParams DroopParams::from_slope(double mu, double deadband, double slope, double q_min,
                                    double q_max) {
  DroopParams p;
  p.mu = mu;
  p.deadband = deadband;
  p.slope = slope;
  p.q_min = q_min;
  p.q_max = q_max;
  if (slope > 0.0) {
    p.v_min = mu - deadband / 2.0 - q_max / slope;
    p.v_max = mu + deadband / 2.0 - q_min / slope;
  } else {
    p.v_min = -kInf;
    p.v_max = kInf;
  }
  p.validate();
  return p;
}

void DroopParams::validate() const {
  if (!(slope >= 0.0)) throw SchemaError("droop slope must be non-negative");
  if (!(deadband >= 0.0)) throw SchemaError("droop deadband must be non-negative");
  if (!(q_min <= 0.0 && 0.0 <= q_max)) throw SchemaError("droop limits must satisfy q_min <= 0 <= q_max");
  if (!(v_min <= mu - deadband / 2.0 && mu + deadband / 2.0 <= v_max)) {
    throw SchemaError("droop cutoffs must bracket the deadband");
  }
}

double droop_dispatch(const DroopParams& params, double v) {
  const double half = params.deadband / 2.0;
  double q = 0.0;
  if (v > params.mu + half) {
    q = -params.slope * (v - params.mu - half);
  } else if (v < params.mu - half) {
    q = -params.slope * (v - params.mu + half);
  }
  return clamp(q, params.q_min, params.q_max);
}

double delayed_dispatch(const DroopParams& params, double tau, double v, double q_prev) {
  return clamp(droop_dispatch(params, v) + tau * q_prev, params.q_min, params.q_max);
}

void AdaptiveParams::validate() const {
  if (!(slope >= 0.0)) throw SchemaError("adaptive slope must be non-negative");
  if (!(q_min <= q_offset && q_offset <= q_max)) {
    throw SchemaError("adaptive offset must lie within [q_min, q_max]");
  }
}

double adaptive_dispatch(const AdaptiveParams& params, double v) {
  return clamp(params.q_offset - params.slope * (v - params.mu), params.q_min, params.q_max);
}

VoltageCutoffs slope_to_cutoffs(double slope, double q_offset, double q_min, double q_max,
                                double mu) {
  if (!(slope > 0.0)) return {-kInf, kInf};
  return {mu - (q_max - q_offset) / slope, mu - (q_min - q_offset) / slope};
}

double cutoffs_to_slope(const VoltageCutoffs& cutoffs, double q_offset, double q_max, double mu) {
  if (std::isinf(cutoffs.v_min)) return 0.0;
  return (q_max - q_offset) / (mu - cutoffs.v_min);
}

void refresh_cutoffs(AdaptiveParams& params) {
  const VoltageCutoffs c =
      slope_to_cutoffs(params.slope, params.q_offset, params.q_min, params.q_max, params.mu);
  params.v_min = c.v_min;
  params.v_max = c.v_max;
}

const char* kind_name(const ControllerKind& kind) {
  struct Visitor {
    const char* operator()(const NoControl&) const { return "none"; }
    const char* operator()(const Conventional&) const { return "conventional"; }
    const char* operator()(const Delayed&) const { return "delayed"; }
    const char* operator()(const Adaptive&) const { return "adaptive"; }
  };
  return std::visit(Visitor{}, kind);
}

}  // namespace voltvar::control
