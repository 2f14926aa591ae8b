// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fatigue/backend.hpp"
#include "fatigue/error.hpp"

namespace fatigue {

/// Replays a fixed sequence of StepOutput records: the n-th call of a run
/// returns record n regardless of the context content.
class ScriptedBackend final : public Backend {
 public:
  explicit ScriptedBackend(std::vector<StepOutput> script, std::size_t max_context = 4096)
      : script_(std::move(script)) {
    if (script_.empty()) throw Error(ErrorKind::InvalidConfig, "script must not be empty");
    if (max_context < 16) throw Error(ErrorKind::InvalidConfig, "max_context must be >= 16");
    desc_.name = "scripted";
    desc_.vocab_size = script_.front().logits.size();
    desc_.max_context = max_context;
    desc_.deterministic = true;
    for (const auto& rec : script_) {
      if (rec.hidden_last) {
        desc_.hidden_dim = rec.hidden_last->size();
        break;
      }
    }
    if (desc_.vocab_size == 0) throw Error(ErrorKind::InvalidConfig, "script logits are empty");
    for (const auto& rec : script_) validate_step_output(rec, desc_);
  }

  [[nodiscard]] const BackendDescriptor& descriptor() const override { return desc_; }

  StepOutput step(std::span<const TokenId> context) override {
    check_context(context);
    std::lock_guard lock(mutex_);
    if (cursor_ >= script_.size()) {
      throw Error(ErrorKind::ScriptExhausted,
                  "script of length " + std::to_string(script_.size()) + " exhausted");
    }
    return script_[cursor_++];
  }

  void reset() override {
    std::lock_guard lock(mutex_);
    cursor_ = 0;
  }

  [[nodiscard]] std::size_t size() const noexcept { return script_.size(); }

  /// Byte-level when the vocabulary covers all bytes; otherwise bytes are folded modulo vocab_size.
  [[nodiscard]] std::vector<TokenId> encode(std::string_view text) const override {
    auto tokens = Backend::encode(text);
    if (desc_.vocab_size < 256) {
      for (auto& t : tokens) t %= static_cast<TokenId>(desc_.vocab_size);
    }
    return tokens;
  }

 private:
  std::vector<StepOutput> script_;
  BackendDescriptor desc_;
  std::mutex mutex_;
  std::size_t cursor_ = 0;
};

/// Reads a JSON-lines script: one StepOutput record per non-blank line.
inline std::vector<StepOutput> load_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidConfig, "cannot open script " + path.string());
  std::vector<StepOutput> script;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      script.push_back(step_output_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::ProtocolError,
                  path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return script;
}

inline void save_script(const std::filesystem::path& path, const std::vector<StepOutput>& script) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InvalidConfig, "cannot write script " + path.string());
  for (const auto& rec : script) out << step_output_to_json(rec).dump() << '\n';
}

inline std::unique_ptr<Backend> make_scripted_backend(std::vector<StepOutput> script,
                                                      std::size_t max_context = 4096) {
  return std::make_unique<ScriptedBackend>(std::move(script), max_context);
}

}  // namespace fatigue
