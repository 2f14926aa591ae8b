// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "fatigue/decode_state.hpp"
#include "fatigue/error.hpp"
#include "fatigue/policy.hpp"

namespace fatigue {

struct InterventionEvent {
  std::size_t step = 0;
  InterventionKind kind = InterventionKind::Sca;
  std::string detail;

  bool operator==(const InterventionEvent&) const = default;
};

namespace detail {
// Drops the oldest non-prompt tokens until the context fits.
inline void fit_context(DecodeState& state) {
  const std::size_t prompt = state.prompt_tokens.size();
  if (state.context.size() <= state.max_context) return;
  const std::size_t excess = state.context.size() - state.max_context;
  state.context.erase(state.context.begin() + static_cast<std::ptrdiff_t>(prompt),
                      state.context.begin() + static_cast<std::ptrdiff_t>(prompt + excess));
}

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}
}  // namespace detail

/// Context becomes prompt ++ the last `tail_keep` generated tokens (meta
/// included). The tail, never the prompt, is trimmed to fit max_context.
/// The transcript is not touched. Returns the number of context tokens dropped.
inline std::size_t rebuild_context(DecodeState& state, std::size_t tail_keep) {
  if (state.prompt_tokens.size() > state.max_context) {
    throw Error(ErrorKind::PromptTooLong, "prompt alone exceeds max_context");
  }
  const std::size_t before = state.context.size();
  std::size_t tail = std::min(tail_keep, state.generated.size());
  tail = std::min(tail, state.max_context - state.prompt_tokens.size());
  state.context = state.prompt_tokens;
  state.context.reserve(state.prompt_tokens.size() + tail);
  for (std::size_t i = state.generated.size() - tail; i < state.generated.size(); ++i) {
    state.context.push_back(state.generated[i].id);
  }
  return before > state.context.size() ? before - state.context.size() : 0;
}

/// Proportional temperature control toward the target entropy. Returns the applied delta.
inline double apply_erd(DecodeState& state, double entropy, const ErdConfig& cfg) {
  const double before = state.temperature;
  state.temperature =
      std::clamp(before + cfg.gain * (cfg.target_entropy - entropy), cfg.t_min, cfg.t_max);
  return state.temperature - before;
}

/// Appends the encoded focus-check line to the context and opens a gate of
/// `gate_tokens` meta tokens.
inline void inject_pause(DecodeState& state, const PauseConfig& cfg,
                         std::span<const TokenId> focus_tokens) {
  if (state.pause_remaining != 0) {
    throw Error(ErrorKind::InvalidConfig, "pause injected inside an active self-check gate");
  }
  if (state.prompt_tokens.size() + focus_tokens.size() > state.max_context) {
    throw Error(ErrorKind::PromptTooLong, "prompt plus focus line exceed max_context");
  }
  state.context.insert(state.context.end(), focus_tokens.begin(), focus_tokens.end());
  detail::fit_context(state);
  state.pause_remaining = cfg.gate_tokens;
}

/// Records one sampled token in the transcript and the context. A full
/// context slides by dropping its oldest non-prompt token.
inline void append_token(DecodeState& state, TokenId token) {
  const bool meta = state.next_is_meta();
  state.generated.push_back({token, meta});
  state.context.push_back(token);
  detail::fit_context(state);
  ++state.step;
  if (meta) {
    --state.pause_remaining;
  } else {
    ++state.answer_tokens;
  }
}

/// Intervene stage for the step just sampled (`state.step`). `entropy` is the
/// value measured this step. Returns one event per applied action; ERD only
/// reports when the temperature actually moved.
inline std::vector<InterventionEvent> execute(const Decision& decision, DecodeState& state,
                                              const PolicyConfig& cfg, double entropy,
                                              std::span<const TokenId> focus_tokens) {
  std::vector<InterventionEvent> events;
  switch (decision.context_action) {
    case ContextAction::ScaRebuild: {
      const auto dropped = rebuild_context(state, cfg.sca.tail_keep);
      events.push_back({state.step, InterventionKind::Sca,
                        "context rebuilt to " + std::to_string(state.context.size()) + " tokens, " +
                            std::to_string(dropped) + " dropped"});
      break;
    }
    case ContextAction::ParRebuild: {
      const auto dropped = rebuild_context(state, cfg.par.tail_keep);
      events.push_back({state.step, InterventionKind::Par,
                        "context rebuilt to " + std::to_string(state.context.size()) + " tokens, " +
                            std::to_string(dropped) + " dropped"});
      break;
    }
    case ContextAction::PauseInject:
      inject_pause(state, cfg.pause, focus_tokens);
      events.push_back({state.step, InterventionKind::Pause,
                        "focus check of " + std::to_string(focus_tokens.size()) + " tokens, gate " +
                            std::to_string(cfg.pause.gate_tokens)});
      break;
    case ContextAction::None:
      break;
  }
  cooldown_tick(state, decision);
  if (decision.erd_adjust) {
    const double delta = apply_erd(state, entropy, cfg.erd);
    if (std::abs(delta) > 1e-9) {
      ++state.firings[static_cast<std::size_t>(InterventionKind::Erd)];
      events.push_back({state.step, InterventionKind::Erd,
                        "dT=" + detail::format_real(delta) + " T=" + detail::format_real(state.temperature)});
    }
  }
  return events;
}

/// Trace tag for a step's events, e.g. "PAR" or "SCA+ERD"; empty when none fired.
inline std::string intervention_tag(std::span<const InterventionEvent> events) {
  std::string tag;
  for (const auto& e : events) {
    if (!tag.empty()) tag += '+';
    tag += to_string(e.kind);
  }
  return tag;
}

}  // namespace fatigue
