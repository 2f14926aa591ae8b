// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <string_view>
#include <vector>

#include "fatigue/backend.hpp"

namespace fatigue {

enum class InterventionKind { Sca = 0, Par = 1, Erd = 2, Pause = 3 };

inline constexpr std::array<InterventionKind, 4> kAllInterventions{
    InterventionKind::Sca, InterventionKind::Par, InterventionKind::Erd, InterventionKind::Pause};

inline constexpr std::string_view to_string(InterventionKind k) noexcept {
  switch (k) {
    case InterventionKind::Sca: return "SCA";
    case InterventionKind::Par: return "PAR";
    case InterventionKind::Erd: return "ERD";
    case InterventionKind::Pause: return "PAUSE";
  }
  return "?";
}

inline std::optional<InterventionKind> intervention_from_string(std::string_view s) noexcept {
  for (auto k : kAllInterventions) {
    if (s == to_string(k)) return k;
  }
  if (s == "sca") return InterventionKind::Sca;
  if (s == "par") return InterventionKind::Par;
  if (s == "erd") return InterventionKind::Erd;
  if (s == "pause") return InterventionKind::Pause;
  return std::nullopt;
}

struct GeneratedToken {
  TokenId id = 0;
  bool meta = false;

  bool operator==(const GeneratedToken&) const = default;
};

/// Per-run decoding state. `generated` is the immutable-order transcript;
/// `context` is what the backend sees and always starts with the prompt.
struct DecodeState {
  std::vector<TokenId> prompt_tokens;
  std::vector<GeneratedToken> generated;
  std::vector<TokenId> context;
  std::size_t max_context = 0;
  double temperature = 1.0;

  std::size_t step = 0;           // sampled tokens so far, meta included
  std::size_t answer_tokens = 0;  // non-meta sampled tokens so far
  std::size_t pause_remaining = 0;
  bool pause_pending = false;

  std::size_t sca_firings = 0;
  std::optional<std::size_t> last_sca_step;
  std::optional<std::size_t> last_reset_step;
  std::array<std::size_t, 4> firings{};

  /// Whether the token sampled next belongs to a self-check gate.
  [[nodiscard]] bool next_is_meta() const noexcept { return pause_remaining > 0; }

  /// Cadence position of the next sampled token; meta tokens do not advance it.
  [[nodiscard]] std::size_t next_cadence_step() const noexcept {
    return answer_tokens + (next_is_meta() ? 0 : 1);
  }

  [[nodiscard]] std::size_t fired(InterventionKind k) const noexcept {
    return firings[static_cast<std::size_t>(k)];
  }
};

inline DecodeState make_decode_state(std::vector<TokenId> prompt, std::size_t max_context,
                                     double temperature) {
  DecodeState s;
  s.context = prompt;
  s.prompt_tokens = std::move(prompt);
  s.max_context = max_context;
  s.temperature = temperature;
  return s;
}

}  // namespace fatigue
