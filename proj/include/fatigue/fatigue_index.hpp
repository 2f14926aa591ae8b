// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fatigue/error.hpp"
#include "fatigue/signal_probe.hpp"

namespace fatigue {

struct FatigueWeights {
  double attention = 0.40;
  double drift = 0.25;
  double entropy = 0.35;

  bool operator==(const FatigueWeights&) const = default;
};

struct NormalizerConfig {
  double entropy_band_low = 1.5;
  double entropy_band_high = 3.0;
  /// Upper entropy bound in nats; 0 means "ln(vocab_size)", resolved at run start.
  double entropy_ceiling = 0.0;
  std::size_t attention_calibration_window = 8;
  double attention_floor = 1e-6;

  bool operator==(const NormalizerConfig&) const = default;
};

struct HysteresisConfig {
  double warn_enter = 0.50;
  double warn_exit = 0.45;
  double critical_enter = 0.70;
  double critical_exit = 0.65;
  double smoothing_alpha = 0.2;

  bool operator==(const HysteresisConfig&) const = default;
};

struct FatigueConfig {
  FatigueWeights weights;
  NormalizerConfig normalizer;
  HysteresisConfig hysteresis;

  bool operator==(const FatigueConfig&) const = default;
};

enum class RiskLevel { Safe, Warn, Critical };

inline constexpr std::string_view to_string(RiskLevel r) noexcept {
  switch (r) {
    case RiskLevel::Safe: return "SAFE";
    case RiskLevel::Warn: return "WARN";
    case RiskLevel::Critical: return "CRITICAL";
  }
  return "SAFE";
}

inline std::optional<RiskLevel> risk_from_string(std::string_view s) noexcept {
  if (s == "SAFE") return RiskLevel::Safe;
  if (s == "WARN") return RiskLevel::Warn;
  if (s == "CRITICAL") return RiskLevel::Critical;
  return std::nullopt;
}

/// Running mean of attention-to-prompt over the calibration window.
struct AttentionCalibration {
  double mean = 0.0;
  std::size_t samples = 0;

  bool operator==(const AttentionCalibration&) const = default;
};

struct FatigueState {
  double phi_attention = 0.0;
  double phi_drift = 0.0;
  double phi_entropy = 0.0;
  double index = 0.0;
  double index_smoothed = 0.0;
  RiskLevel risk = RiskLevel::Safe;
  AttentionCalibration calibration;
  std::size_t steps_observed = 0;

  bool operator==(const FatigueState&) const = default;
};

// Field-level validation; each message names the offending field.
inline std::vector<std::string> validate(const FatigueWeights& w) {
  std::vector<std::string> errors;
  if (w.attention < 0.0) errors.emplace_back("fatigue.weights.attention must be >= 0");
  if (w.drift < 0.0) errors.emplace_back("fatigue.weights.drift must be >= 0");
  if (w.entropy < 0.0) errors.emplace_back("fatigue.weights.entropy must be >= 0");
  if (std::abs(w.attention + w.drift + w.entropy - 1.0) > 1e-9) {
    errors.emplace_back("fatigue.weights must sum to 1");
  }
  return errors;
}

inline std::vector<std::string> validate(const NormalizerConfig& c) {
  std::vector<std::string> errors;
  if (!(c.entropy_band_low >= 0.0 && c.entropy_band_low < c.entropy_band_high)) {
    errors.emplace_back("fatigue.normalizer: need 0 <= entropy_band_low < entropy_band_high");
  }
  if (c.entropy_ceiling != 0.0 && !(c.entropy_band_high < c.entropy_ceiling)) {
    errors.emplace_back("fatigue.normalizer.entropy_ceiling must exceed entropy_band_high");
  }
  if (c.attention_calibration_window < 1) {
    errors.emplace_back("fatigue.normalizer.attention_calibration_window must be >= 1");
  }
  if (!(c.attention_floor > 0.0)) errors.emplace_back("fatigue.normalizer.attention_floor must be > 0");
  return errors;
}

inline std::vector<std::string> validate(const HysteresisConfig& h) {
  std::vector<std::string> errors;
  if (!(h.warn_exit < h.warn_enter)) errors.emplace_back("fatigue.hysteresis: warn_exit must be < warn_enter");
  if (!(h.critical_exit < h.critical_enter)) {
    errors.emplace_back("fatigue.hysteresis: critical_exit must be < critical_enter");
  }
  if (!(h.critical_enter > h.warn_enter)) {
    errors.emplace_back("fatigue.hysteresis: critical_enter must be > warn_enter");
  }
  if (!(h.smoothing_alpha > 0.0 && h.smoothing_alpha <= 1.0)) {
    errors.emplace_back("fatigue.hysteresis.smoothing_alpha must be in (0, 1]");
  }
  return errors;
}

/// Attention loss relative to the run's own early focus. Returns 0 and
/// accumulates the calibration mean during the first window steps.
inline double normalize_attention(double a, AttentionCalibration& calibration,
                                  const NormalizerConfig& cfg) {
  if (calibration.samples < cfg.attention_calibration_window) {
    ++calibration.samples;
    calibration.mean += (a - calibration.mean) / static_cast<double>(calibration.samples);
    return 0.0;
  }
  const double reference = std::max(calibration.mean, cfg.attention_floor);
  return std::clamp(1.0 - a / reference, 0.0, 1.0);
}

/// Saturating map scaled by the anchor norm: 1 - exp(-d / |h0|).
inline double normalize_drift(double d, double anchor_norm) {
  return 1.0 - std::exp(-std::max(d, 0.0) / anchor_norm);
}

/// Zero inside the healthy band, linear distance to the band outside it.
inline double normalize_entropy(double e, const NormalizerConfig& cfg) {
  if (e < cfg.entropy_band_low) {
    return std::clamp((cfg.entropy_band_low - e) / cfg.entropy_band_low, 0.0, 1.0);
  }
  if (e > cfg.entropy_band_high) {
    return std::clamp((e - cfg.entropy_band_high) / (cfg.entropy_ceiling - cfg.entropy_band_high),
                      0.0, 1.0);
  }
  return 0.0;
}

struct ChannelAvailability {
  bool attention = true;
  bool drift = true;
  bool entropy = true;
};

/// Weighted sum of the normalized channels. Weights of unavailable channels
/// are redistributed proportionally over the available ones.
inline double fuse(double phi_attention, double phi_drift, double phi_entropy, const FatigueWeights& w,
                   ChannelAvailability available = {}) {
  const double wa = available.attention ? w.attention : 0.0;
  const double wd = available.drift ? w.drift : 0.0;
  const double we = available.entropy ? w.entropy : 0.0;
  const double total = wa + wd + we;
  if (!(available.attention || available.drift || available.entropy)) {
    throw Error(ErrorKind::AllChannelsUnavailable, "no signal channel available");
  }
  if (!(total > 0.0)) {
    throw Error(ErrorKind::AllChannelsUnavailable, "available channels carry zero weight");
  }
  const double sum = wa * phi_attention + wd * phi_drift + we * phi_entropy;
  if (available.attention && available.drift && available.entropy) return sum;
  return sum / total;
}

/// One hysteresis transition on the smoothed index. Entering a level needs
/// s >= enter; leaving it needs s < exit.
inline RiskLevel next_risk(RiskLevel current, double s, const HysteresisConfig& h) {
  switch (current) {
    case RiskLevel::Safe:
      if (s >= h.critical_enter) return RiskLevel::Critical;
      if (s >= h.warn_enter) return RiskLevel::Warn;
      return RiskLevel::Safe;
    case RiskLevel::Warn:
      if (s >= h.critical_enter) return RiskLevel::Critical;
      if (s < h.warn_exit) return RiskLevel::Safe;
      return RiskLevel::Warn;
    case RiskLevel::Critical:
      if (s >= h.critical_exit) return RiskLevel::Critical;
      if (s < h.warn_exit) return RiskLevel::Safe;
      return RiskLevel::Warn;
  }
  return current;
}

/// Sense stage: raw signals in, next fatigue state out. `anchor_norm` is
/// |h0|, absent when the run has no drift anchor. Pure in (state, raw).
inline FatigueState update(const RawSignals& raw, const FatigueState& state, const FatigueConfig& cfg,
                           std::optional<double> anchor_norm) {
  FatigueState next = state;
  const bool drift_ok = raw.hidden_available && anchor_norm.has_value();
  next.phi_attention =
      raw.attention_available ? normalize_attention(raw.attention_to_prompt, next.calibration, cfg.normalizer)
                              : 0.0;
  next.phi_drift = drift_ok ? normalize_drift(raw.drift, *anchor_norm) : 0.0;
  next.phi_entropy = normalize_entropy(raw.entropy, cfg.normalizer);
  next.index = fuse(next.phi_attention, next.phi_drift, next.phi_entropy, cfg.weights,
                    {raw.attention_available, drift_ok, true});
  const double alpha = cfg.hysteresis.smoothing_alpha;
  next.index_smoothed =
      state.steps_observed == 0 ? next.index : alpha * next.index + (1.0 - alpha) * state.index_smoothed;
  next.risk = next_risk(state.risk, next.index_smoothed, cfg.hysteresis);
  ++next.steps_observed;
  return next;
}

}  // namespace fatigue
