// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fatigue/backend.hpp"
#include "fatigue/error.hpp"
#include "fatigue/math.hpp"
#include "fatigue/rng.hpp"

namespace fatigue {

enum class Strategy { Greedy, TopK, TopP, Beam };

inline constexpr std::string_view to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::Greedy: return "greedy";
    case Strategy::TopK: return "topk";
    case Strategy::TopP: return "topp";
    case Strategy::Beam: return "beam";
  }
  return "";
}

inline std::optional<Strategy> strategy_from_string(std::string_view s) noexcept {
  if (s == "greedy") return Strategy::Greedy;
  if (s == "topk" || s == "top_k") return Strategy::TopK;
  if (s == "topp" || s == "top_p") return Strategy::TopP;
  if (s == "beam") return Strategy::Beam;
  return std::nullopt;
}

struct DecodeConfig {
  Strategy strategy = Strategy::TopP;
  std::size_t top_k = 40;
  double top_p = 0.95;
  double temperature_init = 1.0;
  std::size_t max_new = 120;
  std::uint64_t rng_seed = 0;

  bool operator==(const DecodeConfig&) const = default;
};

inline std::vector<std::string> validate(const DecodeConfig& c) {
  std::vector<std::string> errors;
  if (c.strategy == Strategy::Beam) {
    errors.emplace_back("decode.strategy: beam decoding is out of scope (per-beam fatigue accounting is undefined)");
  }
  if (!(c.top_p > 0.0 && c.top_p <= 1.0)) errors.emplace_back("decode.top_p must be in (0, 1]");
  if (c.top_k < 1) errors.emplace_back("decode.top_k must be >= 1");
  if (c.max_new < 1) errors.emplace_back("decode.max_new must be >= 1");
  if (!(c.temperature_init > 0.0)) errors.emplace_back("decode.temperature must be > 0");
  return errors;
}

/// Token indices ordered by probability descending, ties by lower index.
inline std::vector<std::size_t> rank_tokens(std::span<const double> probs) {
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return probs[a] != probs[b] ? probs[a] > probs[b] : a < b;
  });
  return order;
}

inline std::vector<std::size_t> topk_support(std::span<const double> probs, std::size_t k) {
  auto order = rank_tokens(probs);
  order.resize(std::min(k, order.size()));
  std::sort(order.begin(), order.end());
  return order;
}

/// Smallest probability-descending prefix whose mass reaches `top_p`, plus
/// every token tied with the boundary token. Returned in index order.
inline std::vector<std::size_t> nucleus_support(std::span<const double> probs, double top_p) {
  auto order = rank_tokens(probs);
  double cumulative = 0.0;
  std::size_t count = order.size();
  for (std::size_t i = 0; i < order.size(); ++i) {
    cumulative += probs[order[i]];
    if (cumulative >= top_p) {
      count = i + 1;
      break;
    }
  }
  if (count < order.size()) {
    const double boundary = probs[order[count - 1]];
    while (count < order.size() && probs[order[count]] == boundary) ++count;
  }
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

inline std::size_t argmax_lowest(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

struct SupportEntry {
  TokenId token = 0;
  double probability = 0.0;
};

/// The renormalized distribution a non-greedy strategy samples from, in token order.
inline std::vector<SupportEntry> sampling_distribution(std::span<const double> logits, double temperature,
                                                       const DecodeConfig& cfg) {
  if (logits.empty()) throw Error(ErrorKind::DegenerateDistribution, "empty logits");
  for (double l : logits) {
    if (std::isnan(l) || l == std::numeric_limits<double>::infinity()) {
      throw Error(ErrorKind::DegenerateDistribution, "logits contain NaN or +inf");
    }
  }
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  if (!std::isfinite(max_logit)) throw Error(ErrorKind::DegenerateDistribution, "all logits are -inf");
  if (!(temperature > 0.0)) throw Error(ErrorKind::InvalidConfig, "temperature must be positive");

  const auto probs = math::softmax(logits, temperature);
  std::vector<std::size_t> support;
  switch (cfg.strategy) {
    case Strategy::Greedy:
      support = {argmax_lowest(logits)};
      break;
    case Strategy::TopK:
      support = topk_support(probs, cfg.top_k);
      break;
    case Strategy::TopP:
      support = nucleus_support(probs, cfg.top_p);
      break;
    case Strategy::Beam:
      throw Error(ErrorKind::InvalidConfig, "beam decoding is out of scope");
  }
  double mass = 0.0;
  for (auto i : support) mass += probs[i];
  std::vector<SupportEntry> dist;
  dist.reserve(support.size());
  for (auto i : support) {
    dist.push_back({static_cast<TokenId>(i), cfg.strategy == Strategy::Greedy ? 1.0 : probs[i] / mass});
  }
  return dist;
}

/// Draws the next token. Greedy consumes no randomness; the other strategies
/// consume exactly one uniform draw and walk the support in token order.
inline TokenId sample(std::span<const double> logits, double temperature, const DecodeConfig& cfg, Rng& rng) {
  if (cfg.strategy == Strategy::Greedy) {
    if (logits.empty()) throw Error(ErrorKind::DegenerateDistribution, "empty logits");
    const double max_logit = *std::max_element(logits.begin(), logits.end());
    if (!std::isfinite(max_logit)) throw Error(ErrorKind::DegenerateDistribution, "no finite logit");
    return static_cast<TokenId>(argmax_lowest(logits));
  }
  const auto dist = sampling_distribution(logits, temperature, cfg);
  const double u = rng.uniform();
  double cumulative = 0.0;
  for (const auto& entry : dist) {
    cumulative += entry.probability;
    if (u < cumulative) return entry.token;
  }
  // Rounding left u above the final cumulative sum; take the last positive entry.
  for (auto it = dist.rbegin(); it != dist.rend(); ++it) {
    if (it->probability > 0.0) return it->token;
  }
  return dist.back().token;
}

}  // namespace fatigue
