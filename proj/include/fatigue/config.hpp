// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fatigue/error.hpp"
#include "fatigue/fatigue_index.hpp"
#include "fatigue/policy.hpp"
#include "fatigue/sampler.hpp"
#include "fatigue/signal_probe.hpp"
#include "fatigue/toy_transformer.hpp"

namespace fatigue {

using nlohmann::json;

enum class BackendKind { Toy, Scripted, Remote };

struct BackendSelector {
  BackendKind kind = BackendKind::Toy;
  ToyConfig toy;
  std::string script_path;
  std::size_t script_max_context = 4096;
  std::string endpoint;
  std::optional<std::string> auth;
  std::size_t timeout_ms = 10000;

  bool operator==(const BackendSelector&) const = default;
};

/// Parses "toy", "scripted:<file>" or "remote:<url>".
inline BackendSelector parse_backend_selector(const std::string& text) {
  BackendSelector sel;
  if (text == "toy") return sel;
  if (text.rfind("scripted:", 0) == 0 && text.size() > 9) {
    sel.kind = BackendKind::Scripted;
    sel.script_path = text.substr(9);
    return sel;
  }
  if (text.rfind("remote:", 0) == 0 && text.size() > 7) {
    sel.kind = BackendKind::Remote;
    sel.endpoint = text.substr(7);
    return sel;
  }
  throw Error(ErrorKind::InvalidConfig, "backend must be toy, scripted:<file> or remote:<url>, got '" + text + "'");
}

struct RunConfig {
  std::string prompt;
  std::string label;
  BackendSelector backend;
  DecodeConfig decode;
  PolicyConfig policy;
  FatigueConfig fatigue;
  /// Defaults to the whole prompt.
  std::optional<PromptSlice> prompt_slice;

  bool operator==(const RunConfig&) const = default;
};

// ---- JSON mapping ---------------------------------------------------------
// Missing keys keep their defaults, so partial config files are valid.

namespace detail {
template <typename T>
void read(const json& obj, const char* key, T& field) {
  if (auto it = obj.find(key); it != obj.end() && !it->is_null()) field = it->get<T>();
}
}  // namespace detail

inline json to_json(const ToyConfig& c) {
  return {{"seed", c.seed},         {"layers", c.layers},       {"heads", c.heads},
          {"hidden_dim", c.hidden_dim}, {"max_context", c.max_context}, {"mlp_ratio", c.mlp_ratio},
          {"logit_std", c.logit_std}, {"eos_logit_bias", c.eos_logit_bias}};
}

inline void from_json(const json& j, ToyConfig& c) {
  detail::read(j, "seed", c.seed);
  detail::read(j, "layers", c.layers);
  detail::read(j, "heads", c.heads);
  detail::read(j, "hidden_dim", c.hidden_dim);
  detail::read(j, "max_context", c.max_context);
  detail::read(j, "mlp_ratio", c.mlp_ratio);
  detail::read(j, "logit_std", c.logit_std);
  detail::read(j, "eos_logit_bias", c.eos_logit_bias);
}

inline constexpr std::string_view to_string(BackendKind k) noexcept {
  switch (k) {
    case BackendKind::Toy: return "toy";
    case BackendKind::Scripted: return "scripted";
    case BackendKind::Remote: return "remote";
  }
  return "";
}

/// `redact` hides the remote secret, for snapshots written into traces.
inline json to_json(const BackendSelector& s, bool redact = false) {
  json j{{"kind", std::string(to_string(s.kind))}};
  switch (s.kind) {
    case BackendKind::Toy:
      j["toy"] = to_json(s.toy);
      break;
    case BackendKind::Scripted:
      j["script_path"] = s.script_path;
      j["max_context"] = s.script_max_context;
      break;
    case BackendKind::Remote:
      j["endpoint"] = s.endpoint;
      j["timeout_ms"] = s.timeout_ms;
      if (s.auth) j["auth"] = redact ? std::string("***") : *s.auth;
      break;
  }
  return j;
}

inline void from_json(const json& j, BackendSelector& s) {
  if (j.is_string()) {
    s = parse_backend_selector(j.get<std::string>());
    return;
  }
  const auto kind = j.value("kind", std::string("toy"));
  if (kind == "toy") {
    s.kind = BackendKind::Toy;
    if (auto it = j.find("toy"); it != j.end()) from_json(*it, s.toy);
  } else if (kind == "scripted") {
    s.kind = BackendKind::Scripted;
    detail::read(j, "script_path", s.script_path);
    detail::read(j, "max_context", s.script_max_context);
  } else if (kind == "remote") {
    s.kind = BackendKind::Remote;
    detail::read(j, "endpoint", s.endpoint);
    detail::read(j, "timeout_ms", s.timeout_ms);
    if (auto it = j.find("auth"); it != j.end() && it->is_string()) s.auth = it->get<std::string>();
  } else {
    throw Error(ErrorKind::InvalidConfig, "backend.kind: unknown backend '" + kind + "'");
  }
}

inline json to_json(const DecodeConfig& c) {
  return {{"strategy", std::string(to_string(c.strategy))},
          {"top_k", c.top_k},
          {"top_p", c.top_p},
          {"temperature", c.temperature_init},
          {"max_new", c.max_new},
          {"seed", c.rng_seed}};
}

inline void from_json(const json& j, DecodeConfig& c) {
  if (auto it = j.find("strategy"); it != j.end()) {
    auto s = strategy_from_string(it->get<std::string>());
    if (!s) throw Error(ErrorKind::InvalidConfig, "decode.strategy: unknown strategy '" + it->get<std::string>() + "'");
    c.strategy = *s;
  }
  detail::read(j, "top_k", c.top_k);
  detail::read(j, "top_p", c.top_p);
  detail::read(j, "temperature", c.temperature_init);
  detail::read(j, "max_new", c.max_new);
  detail::read(j, "seed", c.rng_seed);
}

inline json to_json(const PolicyConfig& c) {
  return {{"sca",
           {{"enabled", c.sca.enabled},
            {"tau_attention", c.sca.tau_attention},
            {"cooldown_steps", c.sca.cooldown_steps},
            {"max_firings", c.sca.max_firings},
            {"tail_keep", c.sca.tail_keep}}},
          {"par", {{"enabled", c.par.enabled}, {"reset_every", c.par.reset_every}, {"tail_keep", c.par.tail_keep}}},
          {"erd",
           {{"enabled", c.erd.enabled},
            {"t_min", c.erd.t_min},
            {"t_max", c.erd.t_max},
            {"gain", c.erd.gain},
            {"target_entropy", c.erd.target_entropy}}},
          {"pause",
           {{"enabled", c.pause.enabled},
            {"cadence", c.pause.cadence},
            {"gate_tokens", c.pause.gate_tokens},
            {"drift_trigger_phi", c.pause.drift_trigger_phi},
            {"focus_text", c.pause.focus_text}}}};
}

inline void from_json(const json& j, PolicyConfig& c) {
  if (auto it = j.find("sca"); it != j.end()) {
    detail::read(*it, "enabled", c.sca.enabled);
    detail::read(*it, "tau_attention", c.sca.tau_attention);
    detail::read(*it, "cooldown_steps", c.sca.cooldown_steps);
    detail::read(*it, "max_firings", c.sca.max_firings);
    detail::read(*it, "tail_keep", c.sca.tail_keep);
  }
  if (auto it = j.find("par"); it != j.end()) {
    detail::read(*it, "enabled", c.par.enabled);
    detail::read(*it, "reset_every", c.par.reset_every);
    detail::read(*it, "tail_keep", c.par.tail_keep);
  }
  if (auto it = j.find("erd"); it != j.end()) {
    detail::read(*it, "enabled", c.erd.enabled);
    detail::read(*it, "t_min", c.erd.t_min);
    detail::read(*it, "t_max", c.erd.t_max);
    detail::read(*it, "gain", c.erd.gain);
    detail::read(*it, "target_entropy", c.erd.target_entropy);
  }
  if (auto it = j.find("pause"); it != j.end()) {
    detail::read(*it, "enabled", c.pause.enabled);
    detail::read(*it, "cadence", c.pause.cadence);
    detail::read(*it, "gate_tokens", c.pause.gate_tokens);
    detail::read(*it, "drift_trigger_phi", c.pause.drift_trigger_phi);
    detail::read(*it, "focus_text", c.pause.focus_text);
  }
}

inline json to_json(const FatigueConfig& c) {
  return {{"weights", {{"attention", c.weights.attention}, {"drift", c.weights.drift}, {"entropy", c.weights.entropy}}},
          {"normalizer",
           {{"entropy_band_low", c.normalizer.entropy_band_low},
            {"entropy_band_high", c.normalizer.entropy_band_high},
            {"entropy_ceiling", c.normalizer.entropy_ceiling},
            {"attention_calibration_window", c.normalizer.attention_calibration_window},
            {"attention_floor", c.normalizer.attention_floor}}},
          {"hysteresis",
           {{"warn_enter", c.hysteresis.warn_enter},
            {"warn_exit", c.hysteresis.warn_exit},
            {"critical_enter", c.hysteresis.critical_enter},
            {"critical_exit", c.hysteresis.critical_exit},
            {"smoothing_alpha", c.hysteresis.smoothing_alpha}}}};
}

inline void from_json(const json& j, FatigueConfig& c) {
  if (auto it = j.find("weights"); it != j.end()) {
    detail::read(*it, "attention", c.weights.attention);
    detail::read(*it, "drift", c.weights.drift);
    detail::read(*it, "entropy", c.weights.entropy);
  }
  if (auto it = j.find("normalizer"); it != j.end()) {
    detail::read(*it, "entropy_band_low", c.normalizer.entropy_band_low);
    detail::read(*it, "entropy_band_high", c.normalizer.entropy_band_high);
    detail::read(*it, "entropy_ceiling", c.normalizer.entropy_ceiling);
    detail::read(*it, "attention_calibration_window", c.normalizer.attention_calibration_window);
    detail::read(*it, "attention_floor", c.normalizer.attention_floor);
  }
  if (auto it = j.find("hysteresis"); it != j.end()) {
    detail::read(*it, "warn_enter", c.hysteresis.warn_enter);
    detail::read(*it, "warn_exit", c.hysteresis.warn_exit);
    detail::read(*it, "critical_enter", c.hysteresis.critical_enter);
    detail::read(*it, "critical_exit", c.hysteresis.critical_exit);
    detail::read(*it, "smoothing_alpha", c.hysteresis.smoothing_alpha);
  }
}

inline json to_json(const RunConfig& c, bool redact = false) {
  json j{{"prompt", c.prompt},
         {"label", c.label},
         {"backend", to_json(c.backend, redact)},
         {"decode", to_json(c.decode)},
         {"policy", to_json(c.policy)},
         {"fatigue", to_json(c.fatigue)}};
  j["prompt_slice"] = c.prompt_slice ? json{{"start", c.prompt_slice->start}, {"end", c.prompt_slice->end}} : json();
  return j;
}

namespace detail {
// Throws on any key of `j` that `reference` does not have, recursing into objects.
inline void reject_unknown_keys(const json& j, const json& reference, const std::string& path) {
  if (!j.is_object() || !reference.is_object()) return;
  for (const auto& [key, value] : j.items()) {
    const auto name = path.empty() ? key : path + "." + key;
    if (!reference.contains(key)) throw Error(ErrorKind::InvalidConfig, "unknown configuration key '" + name + "'");
    reject_unknown_keys(value, reference[key], name);
  }
}

inline const json& run_config_keys() {
  static const json keys = [] {
    json k = to_json(RunConfig{});
    k["backend"] = {{"kind", ""},        {"toy", to_json(ToyConfig{})}, {"script_path", ""},
                    {"max_context", 0},  {"endpoint", ""},              {"timeout_ms", 0},
                    {"auth", nullptr}};
    k["prompt_slice"] = {{"start", 0}, {"end", 0}};
    return k;
  }();
  return keys;
}
}  // namespace detail

/// Overlays `j` onto `c`; keys absent from `j` keep their current values.
/// Unknown keys are rejected so that typos do not pass silently.
inline void merge_json(const json& j, RunConfig& c) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, "run configuration must be a JSON object");
  detail::reject_unknown_keys(j, detail::run_config_keys(), "");
  try {
    detail::read(j, "prompt", c.prompt);
    detail::read(j, "label", c.label);
    if (auto it = j.find("backend"); it != j.end()) from_json(*it, c.backend);
    if (auto it = j.find("decode"); it != j.end()) from_json(*it, c.decode);
    if (auto it = j.find("policy"); it != j.end()) from_json(*it, c.policy);
    if (auto it = j.find("fatigue"); it != j.end()) from_json(*it, c.fatigue);
    if (auto it = j.find("prompt_slice"); it != j.end() && !it->is_null()) {
      c.prompt_slice = PromptSlice{it->at("start").get<std::size_t>(), it->at("end").get<std::size_t>()};
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, e.what());
  }
}

inline RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  merge_json(j, c);
  return c;
}

inline json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidConfig, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, path.string() + ": " + e.what());
  }
}

/// All field-level problems; empty when the configuration is runnable.
inline std::vector<std::string> validate(const RunConfig& c) {
  std::vector<std::string> errors;
  if (c.prompt.empty()) errors.emplace_back("prompt must not be empty");
  auto append = [&errors](std::vector<std::string> more) {
    errors.insert(errors.end(), more.begin(), more.end());
  };
  append(validate(c.decode));
  append(validate(c.policy));
  append(validate(c.fatigue.weights));
  append(validate(c.fatigue.normalizer));
  append(validate(c.fatigue.hysteresis));
  if (c.prompt_slice && c.prompt_slice->start >= c.prompt_slice->end) {
    errors.emplace_back("prompt_slice: need start < end");
  }
  if (c.backend.kind == BackendKind::Scripted && c.backend.script_path.empty()) {
    errors.emplace_back("backend.script_path must be set for the scripted backend");
  }
  if (c.backend.kind == BackendKind::Remote && c.backend.endpoint.empty()) {
    errors.emplace_back("backend.endpoint must be set for the remote backend");
  }
  if (c.backend.kind == BackendKind::Toy && c.backend.toy.heads != 0 &&
      c.backend.toy.hidden_dim % c.backend.toy.heads != 0) {
    errors.emplace_back("backend.toy.hidden_dim must be divisible by backend.toy.heads");
  }
  return errors;
}

inline std::string join_errors(const std::vector<std::string>& errors) {
  std::ostringstream os;
  for (std::size_t i = 0; i < errors.size(); ++i) os << (i ? "; " : "") << errors[i];
  return os.str();
}

inline void require_valid(const RunConfig& c) {
  if (auto errors = validate(c); !errors.empty()) throw Error(ErrorKind::InvalidConfig, join_errors(errors));
}

// ---- live knobs -----------------------------------------------------------

/// Sets one policy knob addressed by path ("erd.gain", "policy.sca.tau_attention").
/// The value must match the knob's type and leave the policy valid.
inline void set_knob(PolicyConfig& policy, std::string path, const json& value) {
  if (path.rfind("policy.", 0) == 0) path = path.substr(7);
  const auto dot = path.find('.');
  json tree = to_json(policy);
  if (dot == std::string::npos || !tree.contains(path.substr(0, dot)) ||
      !tree[path.substr(0, dot)].contains(path.substr(dot + 1))) {
    throw Error(ErrorKind::InvalidKnob, "unknown knob '" + path + "'");
  }
  json& slot = tree[path.substr(0, dot)][path.substr(dot + 1)];
  const bool type_ok = (slot.is_boolean() && value.is_boolean()) ||
                       (slot.is_number_unsigned() && value.is_number_unsigned()) ||
                       (slot.is_number_unsigned() && value.is_number_integer() && value.get<std::int64_t>() >= 0) ||
                       (slot.is_number_float() && value.is_number()) || (slot.is_string() && value.is_string());
  if (!type_ok) throw Error(ErrorKind::InvalidKnob, "knob '" + path + "' has wrong type or range");
  slot = slot.is_number_float() ? json(value.get<double>()) : value;
  PolicyConfig updated = policy;
  from_json(tree, updated);
  if (auto errors = validate(updated); !errors.empty()) {
    throw Error(ErrorKind::InvalidKnob, "knob '" + path + "': " + join_errors(errors));
  }
  policy = updated;
}

enum class CommandType { ToggleIntervention, SetKnob, Pause, Resume, Cancel };

/// A mid-run command from the operator. Applied at a step boundary.
struct ControlCommand {
  CommandType type = CommandType::Pause;
  InterventionKind kind = InterventionKind::Erd;
  bool on = true;
  std::string path;
  json value;

  [[nodiscard]] bool changes_policy() const noexcept {
    return type == CommandType::ToggleIntervention || type == CommandType::SetKnob;
  }
};

inline json to_json(const ControlCommand& c) {
  switch (c.type) {
    case CommandType::ToggleIntervention:
      return {{"command", "toggle_intervention"}, {"kind", std::string(to_string(c.kind))}, {"on", c.on}};
    case CommandType::SetKnob:
      return {{"command", "set_knob"}, {"path", c.path}, {"value", c.value}};
    case CommandType::Pause: return {{"command", "pause"}};
    case CommandType::Resume: return {{"command", "resume"}};
    case CommandType::Cancel: return {{"command", "cancel"}};
  }
  return {};
}

inline ControlCommand control_command_from_json(const json& j) {
  ControlCommand c;
  try {
    const auto name = j.at("command").get<std::string>();
    if (name == "toggle_intervention") {
      c.type = CommandType::ToggleIntervention;
      auto kind = intervention_from_string(j.at("kind").get<std::string>());
      if (!kind) throw Error(ErrorKind::InvalidKnob, "unknown intervention kind");
      c.kind = *kind;
      c.on = j.at("on").get<bool>();
    } else if (name == "set_knob") {
      c.type = CommandType::SetKnob;
      c.path = j.at("path").get<std::string>();
      c.value = j.at("value");
    } else if (name == "pause") {
      c.type = CommandType::Pause;
    } else if (name == "resume") {
      c.type = CommandType::Resume;
    } else if (name == "cancel") {
      c.type = CommandType::Cancel;
    } else {
      throw Error(ErrorKind::InvalidKnob, "unknown command '" + name + "'");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidKnob, e.what());
  }
  return c;
}

/// Applies a policy-changing command; pause/resume/cancel are no-ops here.
inline void apply_command(PolicyConfig& policy, const ControlCommand& c) {
  if (c.type == CommandType::SetKnob) {
    set_knob(policy, c.path, c.value);
  } else if (c.type == CommandType::ToggleIntervention) {
    switch (c.kind) {
      case InterventionKind::Sca: policy.sca.enabled = c.on; break;
      case InterventionKind::Par: policy.par.enabled = c.on; break;
      case InterventionKind::Erd: policy.erd.enabled = c.on; break;
      case InterventionKind::Pause: policy.pause.enabled = c.on; break;
    }
  }
}

}  // namespace fatigue
