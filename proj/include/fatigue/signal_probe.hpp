// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "fatigue/backend.hpp"
#include "fatigue/error.hpp"

namespace fatigue {

/// Half-open range of prompt positions against which attention mass is measured.
struct PromptSlice {
  std::size_t start = 0;
  std::size_t end = 0;

  [[nodiscard]] std::size_t size() const noexcept { return end - start; }
  bool operator==(const PromptSlice&) const = default;
};

/// Raw per-token measurements. Unavailable channels hold 0 and are flagged.
struct RawSignals {
  double attention_to_prompt = 0.0;  // mean mass over the slice
  double attention_total = 0.0;      // summed mass over the slice
  double drift = 0.0;                // Euclidean distance in hidden space
  double entropy = 0.0;              // nats
  bool attention_available = true;
  bool hidden_available = true;

  bool operator==(const RawSignals&) const = default;
};

/// Prompt's last-token hidden state, the reference point for drift.
struct DriftAnchor {
  std::vector<double> h0;
  double h0_norm = 0.0;
};

inline double l2_norm(std::span<const double> v) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  return std::sqrt(ss);
}

/// nullopt for a zero vector, which cannot anchor the drift scale.
inline std::optional<DriftAnchor> make_drift_anchor(std::vector<double> h0) {
  const double norm = l2_norm(h0);
  if (!(norm > 0.0) || !std::isfinite(norm)) return std::nullopt;
  return DriftAnchor{std::move(h0), norm};
}

inline double attention_to_prompt(std::span<const double> attention_row, PromptSlice slice) {
  if (slice.start >= slice.end || slice.end > attention_row.size()) {
    throw Error(ErrorKind::SliceOutOfRange,
                "slice [" + std::to_string(slice.start) + "," + std::to_string(slice.end) +
                    ") outside attention row of length " + std::to_string(attention_row.size()));
  }
  double total = 0.0;
  for (std::size_t i = slice.start; i < slice.end; ++i) total += attention_row[i];
  return total / static_cast<double>(slice.size());
}

inline double embedding_drift(std::span<const double> hidden_last, const DriftAnchor& anchor) {
  if (hidden_last.size() != anchor.h0.size()) {
    throw Error(ErrorKind::DimensionMismatch, "hidden dimension " + std::to_string(hidden_last.size()) +
                                                  " vs anchor " + std::to_string(anchor.h0.size()));
  }
  double ss = 0.0;
  for (std::size_t i = 0; i < hidden_last.size(); ++i) {
    const double diff = hidden_last[i] - anchor.h0[i];
    ss += diff * diff;
  }
  return std::sqrt(ss);
}

/// Entropy in nats of softmax(logits / temperature), via H = log Z - sum p z
/// with z the max-shifted scaled logits. Clamped to [0, ln V] against rounding.
inline double next_token_entropy(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) throw Error(ErrorKind::InvalidConfig, "temperature must be positive");
  if (logits.empty()) throw Error(ErrorKind::DegenerateDistribution, "empty logits");
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  if (!std::isfinite(max_logit)) throw Error(ErrorKind::DegenerateDistribution, "no finite logit");
  double z_sum = 0.0;
  double weighted = 0.0;
  for (double l : logits) {
    if (l == -std::numeric_limits<double>::infinity()) continue;
    const double z = (l - max_logit) / temperature;
    const double e = std::exp(z);
    z_sum += e;
    weighted += e * z;
  }
  const double entropy = std::log(z_sum) - weighted / z_sum;
  return std::clamp(entropy, 0.0, std::log(static_cast<double>(logits.size())));
}

/// Bundles the three measurements for one step. `anchor` may be absent (no
/// usable h0), in which case drift is reported unavailable.
inline RawSignals probe(const StepOutput& step_output, PromptSlice slice, const DriftAnchor* anchor,
                        double temperature) {
  RawSignals raw;
  if (step_output.attention_row) {
    raw.attention_to_prompt = attention_to_prompt(*step_output.attention_row, slice);
    raw.attention_total = raw.attention_to_prompt * static_cast<double>(slice.size());
  } else {
    raw.attention_available = false;
  }
  if (step_output.hidden_last && anchor != nullptr) {
    raw.drift = embedding_drift(*step_output.hidden_last, *anchor);
  } else {
    raw.hidden_available = false;
  }
  raw.entropy = next_token_entropy(step_output.logits, temperature);
  return raw;
}

}  // namespace fatigue
