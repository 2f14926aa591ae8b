// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fatigue/error.hpp"
#include "fatigue/math.hpp"

namespace fatigue {

using TokenId = std::uint32_t;

/// One model call for the newest position of a context.
struct StepOutput {
  std::vector<double> logits;
  /// Last-layer attention from the newest position over the context, averaged across heads.
  std::optional<std::vector<double>> attention_row;
  /// Last-layer residual-stream output at the newest position.
  std::optional<std::vector<double>> hidden_last;

  bool operator==(const StepOutput&) const = default;
};

struct BackendDescriptor {
  std::string name;
  std::size_t vocab_size = 0;
  std::size_t hidden_dim = 0;
  std::size_t max_context = 0;
  bool deterministic = true;
  std::optional<TokenId> eos_token;
};

inline constexpr double kAttentionSumTolerance = 1e-6;

/// Checks the StepOutput invariants against a descriptor. Throws ProtocolError.
inline void validate_step_output(const StepOutput& out, const BackendDescriptor& desc) {
  if (out.logits.size() != desc.vocab_size) {
    throw Error(ErrorKind::ProtocolError, "logits length " + std::to_string(out.logits.size()) +
                                              " != vocab_size " + std::to_string(desc.vocab_size));
  }
  if (!math::all_finite(out.logits)) throw Error(ErrorKind::ProtocolError, "non-finite logits");
  if (out.attention_row) {
    double total = 0.0;
    for (double a : *out.attention_row) {
      if (!(a >= 0.0)) throw Error(ErrorKind::ProtocolError, "negative attention mass");
      total += a;
    }
    if (std::abs(total - 1.0) > kAttentionSumTolerance) {
      throw Error(ErrorKind::ProtocolError, "attention row sums to " + std::to_string(total));
    }
  }
  if (out.hidden_last) {
    if (desc.hidden_dim != 0 && out.hidden_last->size() != desc.hidden_dim) {
      throw Error(ErrorKind::ProtocolError, "hidden vector has dimension " +
                                                std::to_string(out.hidden_last->size()));
    }
    if (!math::all_finite(*out.hidden_last)) {
      throw Error(ErrorKind::ProtocolError, "non-finite hidden state");
    }
  }
}

/// The language model as a step function. Implementations may keep a per-run
/// cursor (the scripted backend does); `reset` starts a new run.
class Backend {
 public:
  virtual ~Backend() = default;

  [[nodiscard]] virtual const BackendDescriptor& descriptor() const = 0;

  virtual StepOutput step(std::span<const TokenId> context) = 0;

  virtual void reset() {}

  /// Byte-level by default: one token per byte.
  [[nodiscard]] virtual std::vector<TokenId> encode(std::string_view text) const {
    if (text.empty()) throw Error(ErrorKind::TokenizationError, "cannot encode empty text");
    std::vector<TokenId> tokens;
    tokens.reserve(text.size());
    for (unsigned char c : text) tokens.push_back(static_cast<TokenId>(c));
    return tokens;
  }

  [[nodiscard]] virtual std::string decode(std::span<const TokenId> tokens) const {
    std::string text;
    text.reserve(tokens.size());
    for (TokenId t : tokens) {
      if (t < 256) {
        text.push_back(static_cast<char>(static_cast<unsigned char>(t)));
      } else {
        text += "<" + std::to_string(t) + ">";
      }
    }
    return text;
  }

 protected:
  void check_context(std::span<const TokenId> context) const {
    const auto& desc = descriptor();
    if (context.empty()) throw Error(ErrorKind::ContextOverflow, "empty context");
    if (context.size() > desc.max_context) {
      throw Error(ErrorKind::ContextOverflow, "context length " + std::to_string(context.size()) +
                                                  " exceeds max_context " +
                                                  std::to_string(desc.max_context));
    }
  }
};

// Wire schema shared by the remote protocol response and script files:
//   {"logits": [f...] | {"topk": [[id, logit]...], "tail_logsum": f},
//    "attention_row": [f...] | null, "hidden": [f...] | null}

/// Expands a top-K response to a full logit vector. The tail mass
/// exp(tail_logsum) is spread uniformly over the vocabulary entries not listed.
inline std::vector<double> expand_topk_logits(const nlohmann::json& topk, double tail_logsum,
                                              std::size_t vocab_size) {
  if (!topk.is_array() || topk.empty()) {
    throw Error(ErrorKind::ProtocolError, "topk must be a non-empty array");
  }
  std::vector<double> logits(vocab_size, -std::numeric_limits<double>::infinity());
  std::vector<bool> listed(vocab_size, false);
  std::size_t listed_count = 0;
  for (const auto& entry : topk) {
    if (!entry.is_array() || entry.size() != 2) {
      throw Error(ErrorKind::ProtocolError, "topk entries must be [id, logit] pairs");
    }
    const auto id = entry[0].get<std::int64_t>();
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size) {
      throw Error(ErrorKind::ProtocolError, "topk id out of range");
    }
    if (!listed[id]) ++listed_count;
    listed[id] = true;
    logits[id] = entry[1].get<double>();
  }
  const std::size_t rest = vocab_size - listed_count;
  if (rest > 0) {
    if (!std::isfinite(tail_logsum)) {
      throw Error(ErrorKind::ProtocolError, "tail_logsum must be finite");
    }
    const double each = tail_logsum - std::log(static_cast<double>(rest));
    for (std::size_t i = 0; i < vocab_size; ++i) {
      if (!listed[i]) logits[i] = each;
    }
  }
  return logits;
}

namespace detail {
inline std::optional<std::vector<double>> optional_vector(const nlohmann::json& obj,
                                                          const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_array()) throw Error(ErrorKind::ProtocolError, std::string(key) + " must be an array");
  return it->get<std::vector<double>>();
}
}  // namespace detail

/// Parses one StepOutput record. `vocab_size` is required to expand top-K logits
/// and may be zero when full logits are expected.
inline StepOutput step_output_from_json(const nlohmann::json& obj, std::size_t vocab_size = 0) {
  if (!obj.is_object()) throw Error(ErrorKind::ProtocolError, "step record must be an object");
  StepOutput out;
  try {
    auto logits = obj.find("logits");
    if (logits == obj.end()) throw Error(ErrorKind::ProtocolError, "missing logits");
    if (logits->is_array()) {
      out.logits = logits->get<std::vector<double>>();
    } else if (logits->is_object()) {
      if (vocab_size == 0) throw Error(ErrorKind::ProtocolError, "top-K logits need a vocab size");
      out.logits = expand_topk_logits(logits->at("topk"), logits->at("tail_logsum").get<double>(),
                                      vocab_size);
    } else {
      throw Error(ErrorKind::ProtocolError, "logits must be an array or a top-K object");
    }
    out.attention_row = detail::optional_vector(obj, "attention_row");
    out.hidden_last = detail::optional_vector(obj, "hidden");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ProtocolError, e.what());
  }
  return out;
}

inline nlohmann::json step_output_to_json(const StepOutput& out) {
  nlohmann::json obj;
  obj["logits"] = out.logits;
  obj["attention_row"] = out.attention_row ? nlohmann::json(*out.attention_row) : nlohmann::json();
  obj["hidden"] = out.hidden_last ? nlohmann::json(*out.hidden_last) : nlohmann::json();
  return obj;
}

inline nlohmann::json descriptor_to_json(const BackendDescriptor& d) {
  nlohmann::json obj{{"name", d.name},
                     {"vocab_size", d.vocab_size},
                     {"hidden_dim", d.hidden_dim},
                     {"max_context", d.max_context},
                     {"deterministic", d.deterministic}};
  obj["eos_token"] = d.eos_token ? nlohmann::json(*d.eos_token) : nlohmann::json();
  return obj;
}

inline BackendDescriptor descriptor_from_json(const nlohmann::json& obj) {
  BackendDescriptor d;
  d.name = obj.value("name", std::string{});
  d.vocab_size = obj.at("vocab_size").get<std::size_t>();
  d.hidden_dim = obj.value("hidden_dim", std::size_t{0});
  d.max_context = obj.at("max_context").get<std::size_t>();
  d.deterministic = obj.value("deterministic", false);
  if (auto it = obj.find("eos_token"); it != obj.end() && !it->is_null()) {
    d.eos_token = it->get<TokenId>();
  }
  return d;
}

}  // namespace fatigue
