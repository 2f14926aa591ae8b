// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fatigue/decode_state.hpp"
#include "fatigue/fatigue_index.hpp"
#include "fatigue/signal_probe.hpp"

namespace fatigue {

inline constexpr std::string_view kDefaultFocusText =
    "\n[Focus check: restate the question and verify the last claim.]\n";

struct ScaConfig {
  bool enabled = false;
  double tau_attention = 0.010;
  std::size_t cooldown_steps = 8;
  std::size_t max_firings = 1;
  std::size_t tail_keep = 128;

  bool operator==(const ScaConfig&) const = default;
};

struct ParConfig {
  bool enabled = false;
  std::size_t reset_every = 50;
  std::size_t tail_keep = 128;

  bool operator==(const ParConfig&) const = default;
};

struct ErdConfig {
  bool enabled = false;
  double t_min = 0.7;
  double t_max = 1.5;
  double gain = 0.35;
  double target_entropy = 2.8;

  bool operator==(const ErdConfig&) const = default;
};

struct PauseConfig {
  bool enabled = false;
  std::size_t cadence = 30;
  std::size_t gate_tokens = 5;
  double drift_trigger_phi = 0.8;
  std::string focus_text{kDefaultFocusText};

  bool operator==(const PauseConfig&) const = default;
};

struct PolicyConfig {
  ScaConfig sca;
  ParConfig par;
  ErdConfig erd;
  PauseConfig pause;

  [[nodiscard]] bool any_enabled() const noexcept {
    return sca.enabled || par.enabled || erd.enabled || pause.enabled;
  }
  [[nodiscard]] PolicyConfig all_disabled() const {
    PolicyConfig c = *this;
    c.sca.enabled = c.par.enabled = c.erd.enabled = c.pause.enabled = false;
    return c;
  }

  bool operator==(const PolicyConfig&) const = default;
};

inline std::vector<std::string> validate(const PolicyConfig& c) {
  std::vector<std::string> errors;
  if (!(c.sca.tau_attention >= 0.0 && c.sca.tau_attention <= 1.0)) {
    errors.emplace_back("policy.sca.tau_attention must be in [0, 1]");
  }
  if (c.par.reset_every < 1) errors.emplace_back("policy.par.reset_every must be >= 1");
  if (!(c.erd.t_min > 0.0)) errors.emplace_back("policy.erd.t_min must be > 0");
  if (!(c.erd.t_min < c.erd.t_max)) errors.emplace_back("policy.erd: t_min must be < t_max");
  if (!(c.erd.gain >= 0.0)) errors.emplace_back("policy.erd.gain must be >= 0");
  if (!(c.erd.target_entropy >= 0.0)) errors.emplace_back("policy.erd.target_entropy must be >= 0");
  if (c.pause.cadence < 1) errors.emplace_back("policy.pause.cadence must be >= 1");
  if (c.pause.gate_tokens < 1) errors.emplace_back("policy.pause.gate_tokens must be >= 1");
  if (!(c.pause.drift_trigger_phi >= 0.0 && c.pause.drift_trigger_phi <= 1.0)) {
    errors.emplace_back("policy.pause.drift_trigger_phi must be in [0, 1]");
  }
  if (c.pause.enabled && c.pause.focus_text.empty()) {
    errors.emplace_back("policy.pause.focus_text must not be empty");
  }
  return errors;
}

enum class ContextAction { None, ScaRebuild, ParRebuild, PauseInject };

inline constexpr std::string_view to_string(ContextAction a) noexcept {
  switch (a) {
    case ContextAction::None: return "NONE";
    case ContextAction::ScaRebuild: return "SCA_REBUILD";
    case ContextAction::ParRebuild: return "PAR_REBUILD";
    case ContextAction::PauseInject: return "PAUSE_INJECT";
  }
  return "NONE";
}

enum class TriggerSignal { Attention, Entropy, Drift, Cadence, Fatigue };

inline constexpr std::string_view to_string(TriggerSignal t) noexcept {
  switch (t) {
    case TriggerSignal::Attention: return "attention";
    case TriggerSignal::Entropy: return "entropy";
    case TriggerSignal::Drift: return "drift";
    case TriggerSignal::Cadence: return "cadence";
    case TriggerSignal::Fatigue: return "fatigue";
  }
  return "";
}

struct Decision {
  ContextAction context_action = ContextAction::None;
  bool erd_adjust = false;
  std::string reason;
  std::optional<TriggerSignal> triggering_signal;
  /// A PAUSE was due but lost to a higher-priority rebuild; it runs next step.
  bool pause_deferred = false;

  bool operator==(const Decision&) const = default;
};

/// Decide stage. `step` is the 1-based decode step about to sample; cadences
/// count non-meta tokens only. Priority is SCA > PAR > PAUSE; ERD is
/// orthogonal and flagged whenever enabled.
inline Decision decide(std::size_t step, const RawSignals& raw, const FatigueState& fstate,
                       const DecodeState& dstate, const PolicyConfig& cfg) {
  Decision d;
  d.erd_adjust = cfg.erd.enabled;
  if (step == 0) return d;

  const bool meta = dstate.next_is_meta();
  const std::size_t cadence = dstate.next_cadence_step();

  const bool sca = cfg.sca.enabled && raw.attention_available &&
                   raw.attention_to_prompt < cfg.sca.tau_attention &&
                   (!dstate.last_sca_step || step - *dstate.last_sca_step >= cfg.sca.cooldown_steps) &&
                   dstate.sca_firings < cfg.sca.max_firings;
  const bool par = cfg.par.enabled && !meta && cadence % cfg.par.reset_every == 0;

  std::optional<TriggerSignal> pause_trigger;
  if (cfg.pause.enabled && !meta) {
    if (cadence % cfg.pause.cadence == 0 || dstate.pause_pending) {
      pause_trigger = TriggerSignal::Cadence;
    } else if (fstate.phi_entropy > 0.0) {
      pause_trigger = TriggerSignal::Entropy;
    } else if (fstate.phi_drift > cfg.pause.drift_trigger_phi) {
      pause_trigger = TriggerSignal::Drift;
    }
  }

  if (sca) {
    d.context_action = ContextAction::ScaRebuild;
    d.triggering_signal = TriggerSignal::Attention;
    d.reason = "attention below tau";
  } else if (par) {
    d.context_action = ContextAction::ParRebuild;
    d.triggering_signal = TriggerSignal::Cadence;
    d.reason = "reset cadence";
  } else if (pause_trigger) {
    d.context_action = ContextAction::PauseInject;
    d.triggering_signal = pause_trigger;
    d.reason = dstate.pause_pending ? "deferred self-check" : "self-check";
  }
  d.pause_deferred = pause_trigger.has_value() && d.context_action != ContextAction::PauseInject;
  return d;
}

/// Firing bookkeeping after a decision took effect at `dstate.step`.
inline void cooldown_tick(DecodeState& dstate, const Decision& decision) {
  switch (decision.context_action) {
    case ContextAction::ScaRebuild:
      ++dstate.sca_firings;
      dstate.last_sca_step = dstate.step;
      ++dstate.firings[static_cast<std::size_t>(InterventionKind::Sca)];
      break;
    case ContextAction::ParRebuild:
      dstate.last_reset_step = dstate.step;
      ++dstate.firings[static_cast<std::size_t>(InterventionKind::Par)];
      break;
    case ContextAction::PauseInject:
      ++dstate.firings[static_cast<std::size_t>(InterventionKind::Pause)];
      break;
    case ContextAction::None:
      break;
  }
  if (decision.context_action == ContextAction::PauseInject) {
    dstate.pause_pending = false;
  } else if (decision.pause_deferred) {
    dstate.pause_pending = true;
  }
}

}  // namespace fatigue
