#include "voltvar/adaptation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "voltvar/error.hpp"

namespace voltvar::adaptation {

void AdaptiveConfig::validate() const {
  if (horizon < 2) throw SchemaError("adaptive horizon T must be at least 2");
  if (!(k_d > 0.0)) throw SchemaError("k_d must be positive");
  if (!(eps_sse >= 0.0)) throw SchemaError("eps_sse must be non-negative");
  if (!(vf_lim_bar > vf_lim && vf_lim > eps_vf && eps_vf > 0.0)) {
    throw SchemaError("flicker limits must satisfy vf_lim_bar > vf_lim > eps_vf > 0");
  }
  if (!(delta_vf_bar > delta_vf && delta_vf > 0.0)) {
    throw SchemaError("slope steps must satisfy delta_vf_bar > delta_vf > 0");
  }
  if (!(m_floor >= 0.0)) throw SchemaError("m_floor must be non-negative");
  if (!(m_init >= m_floor)) throw SchemaError("m_init must not be below m_floor");
}

WindowStats window_stats(std::span<const double> voltages, double mu, std::span<const double> p_pv,
                         int horizon, bool signed_flicker) {
  const auto t = static_cast<std::size_t>(horizon);
  if (horizon < 1 || voltages.size() != t || p_pv.size() != t) {
    throw SchemaError("window length mismatch: expected " + std::to_string(horizon) +
                      " samples, got " + std::to_string(voltages.size()) + " voltages and " +
                      std::to_string(p_pv.size()) + " pv samples");
  }
  WindowStats stats;
  double deviation = 0.0;
  double flicker = 0.0;
  double p_sum = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    deviation += voltages[i] - mu;
    p_sum += p_pv[i];
    if (i > 0) {
      const double step = (voltages[i] - voltages[i - 1]) / voltages[i];
      flicker += signed_flicker ? step : std::abs(step);
    }
  }
  const double n = static_cast<double>(horizon);
  stats.sse_avg = deviation / n;
  stats.vf = std::abs(100.0 * flicker / n);
  stats.p_pv_avg = p_sum / n;
  return stats;
}

double strategy1_update_qp(double q_p_prev, const WindowStats& stats, const AdaptiveConfig& cfg) {
  if (std::abs(stats.sse_avg) > cfg.eps_sse) return q_p_prev - cfg.k_d * stats.sse_avg;
  return q_p_prev;
}

FlickerZone flicker_zone(double vf, const AdaptiveConfig& cfg) {
  if (vf > cfg.vf_lim_bar) return FlickerZone::kCritical;
  if (vf > cfg.vf_lim) return FlickerZone::kSubcritical;
  if (vf > cfg.vf_lim - cfg.eps_vf) return FlickerZone::kSafe;
  return FlickerZone::kRelaxed;
}

double strategy2_update_slope(double m_prev, const WindowStats& stats, const AdaptiveConfig& cfg) {
  double step = 0.0;
  switch (flicker_zone(stats.vf, cfg)) {
    case FlickerZone::kCritical:
      step = -cfg.delta_vf_bar;
      break;
    case FlickerZone::kSubcritical:
      step = -cfg.delta_vf;
      break;
    case FlickerZone::kSafe:
      break;
    case FlickerZone::kRelaxed:
      if (std::abs(stats.sse_avg) > cfg.eps_sse) step = cfg.delta_vf;
      break;
  }
  return std::max(m_prev + step, cfg.m_floor);
}

VarLimits capacity_limits(double rating_s, double p_pv_avg) {
  const double p = std::min(std::max(p_pv_avg, 0.0), rating_s);
  const double q = std::sqrt(std::max(rating_s * rating_s - p * p, 0.0));
  return {-q, q};
}

OuterLoopResult outer_loop_step(const control::AdaptiveParams& current, double rating_s,
                                std::span<const double> voltages, std::span<const double> p_pv,
                                const AdaptiveConfig& cfg) {
  return outer_loop_apply(current, rating_s,
                          window_stats(voltages, current.mu, p_pv, cfg.horizon, cfg.signed_flicker), cfg);
}

OuterLoopResult outer_loop_apply(const control::AdaptiveParams& current, double rating_s,
                                 const WindowStats& stats, const AdaptiveConfig& cfg) {
  OuterLoopResult out;
  out.stats = stats;
  control::AdaptiveParams next = current;
  next.q_offset = strategy1_update_qp(current.q_offset, out.stats, cfg);
  next.slope = strategy2_update_slope(current.slope, out.stats, cfg);
  const VarLimits limits = capacity_limits(rating_s, out.stats.p_pv_avg);
  next.q_min = limits.q_min;
  next.q_max = limits.q_max;
  next.q_offset = std::min(std::max(next.q_offset, next.q_min), next.q_max);
  control::refresh_cutoffs(next);
  out.params = next;
  return out;
}

control::AdaptiveParams initial_params(double mu, double m_init, double rating_s, double p_pv) {
  control::AdaptiveParams params;
  params.mu = mu;
  params.slope = m_init;
  params.q_offset = 0.0;
  const VarLimits limits = capacity_limits(rating_s, p_pv);
  params.q_min = limits.q_min;
  params.q_max = limits.q_max;
  control::refresh_cutoffs(params);
  return params;
}

}  // namespace voltvar::adaptation
