// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "fatigue/backend.hpp"
#include "fatigue/error.hpp"

namespace fatigue {

struct RemoteConfig {
  /// Base URL, e.g. "http://127.0.0.1:9000" or "http://host:9000/v1".
  std::string endpoint;
  std::optional<std::string> auth;
  std::chrono::milliseconds timeout{10000};
};

/// Client for an inference server speaking the per-step protocol:
///   GET  <base>/health      -> descriptor {vocab_size, hidden_dim, max_context, ...}
///   POST <base>/step        {context, need} -> StepOutput wire record
///   POST <base>/tokenize    {text} -> {tokens}       (optional; byte-level fallback)
///   POST <base>/detokenize  {tokens} -> {text}       (optional; byte-level fallback)
/// Missing attention or hidden fields are passed through as absent so the
/// probe can mark those channels unavailable.
class RemoteBackend final : public Backend {
 public:
  explicit RemoteBackend(RemoteConfig cfg) : cfg_(std::move(cfg)) {
    auto [origin, prefix] = split_url(cfg_.endpoint);
    prefix_ = std::move(prefix);
    client_ = std::make_unique<httplib::Client>(origin);
    if (!client_->is_valid()) throw Error(ErrorKind::InvalidConfig, "bad endpoint " + cfg_.endpoint);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout - secs);
    client_->set_connection_timeout(secs.count(), usecs.count());
    client_->set_read_timeout(secs.count(), usecs.count());
    client_->set_write_timeout(secs.count(), usecs.count());
    if (cfg_.auth) client_->set_bearer_token_auth(*cfg_.auth);

    auto res = client_->Get(prefix_ + "/health");
    if (!res) {
      throw Error(ErrorKind::BackendUnavailable,
                  "health probe to " + cfg_.endpoint + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
      throw Error(ErrorKind::BackendUnavailable,
                  "health probe returned HTTP " + std::to_string(res->status));
    }
    try {
      desc_ = descriptor_from_json(nlohmann::json::parse(res->body));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::ProtocolError, std::string("health response: ") + e.what());
    }
    desc_.name = "remote:" + (desc_.name.empty() ? cfg_.endpoint : desc_.name);
    if (desc_.vocab_size == 0 || desc_.max_context < 16) {
      throw Error(ErrorKind::ProtocolError, "health response has an invalid descriptor");
    }
  }

  [[nodiscard]] const BackendDescriptor& descriptor() const override { return desc_; }

  StepOutput step(std::span<const TokenId> context) override {
    check_context(context);
    nlohmann::json body{{"context", std::vector<TokenId>(context.begin(), context.end())},
                        {"need", {"logits", "attention", "hidden"}}};
    const nlohmann::json reply = post("/step", body);
    StepOutput out = step_output_from_json(reply, desc_.vocab_size);
    if (out.attention_row && out.attention_row->size() != context.size()) {
      throw Error(ErrorKind::ProtocolError, "attention row length does not match context");
    }
    validate_step_output(out, desc_);
    return out;
  }

  [[nodiscard]] std::vector<TokenId> encode(std::string_view text) const override {
    if (text.empty()) throw Error(ErrorKind::TokenizationError, "cannot encode empty text");
    auto reply = try_post("/tokenize", nlohmann::json{{"text", std::string(text)}});
    if (!reply) return byte_fallback_encode(text);
    try {
      auto tokens = reply->at("tokens").get<std::vector<TokenId>>();
      for (TokenId t : tokens) {
        if (t >= desc_.vocab_size) throw Error(ErrorKind::TokenizationError, "token out of range");
      }
      if (tokens.empty()) throw Error(ErrorKind::TokenizationError, "server returned no tokens");
      return tokens;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::TokenizationError, e.what());
    }
  }

  [[nodiscard]] std::string decode(std::span<const TokenId> tokens) const override {
    auto reply = try_post("/detokenize", nlohmann::json{{"tokens", std::vector<TokenId>(
                                                                       tokens.begin(), tokens.end())}});
    if (!reply) return Backend::decode(tokens);
    try {
      return reply->at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::TokenizationError, e.what());
    }
  }

  static std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error(ErrorKind::InvalidConfig, "endpoint needs a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, ""};
    std::string prefix = url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {url.substr(0, path_start), prefix};
  }

 private:
  nlohmann::json post(const std::string& path, const nlohmann::json& body) const {
    std::lock_guard lock(mutex_);
    auto res = client_->Post(prefix_ + path, body.dump(), "application/json");
    if (!res) {
      throw Error(ErrorKind::BackendUnavailable, path + ": " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
      throw Error(ErrorKind::BackendUnavailable, path + " returned HTTP " + std::to_string(res->status));
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::ProtocolError, path + ": " + e.what());
    }
  }

  // nullopt when the server does not implement the endpoint.
  std::optional<nlohmann::json> try_post(const std::string& path, const nlohmann::json& body) const {
    std::lock_guard lock(mutex_);
    auto res = client_->Post(prefix_ + path, body.dump(), "application/json");
    if (!res) throw Error(ErrorKind::BackendUnavailable, path + ": " + httplib::to_string(res.error()));
    if (res->status == 404) return std::nullopt;
    if (res->status != 200) {
      throw Error(ErrorKind::TokenizationError, path + " returned HTTP " + std::to_string(res->status));
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::TokenizationError, e.what());
    }
  }

  [[nodiscard]] std::vector<TokenId> byte_fallback_encode(std::string_view text) const {
    if (desc_.vocab_size < 256) {
      throw Error(ErrorKind::TokenizationError, "server has no tokenizer and vocabulary is not byte-level");
    }
    return Backend::encode(text);
  }

  RemoteConfig cfg_;
  std::string prefix_;
  std::unique_ptr<httplib::Client> client_;
  BackendDescriptor desc_;
  mutable std::mutex mutex_;
};

inline std::unique_ptr<Backend> make_remote_backend(const std::string& endpoint,
                                                    std::optional<std::string> auth = std::nullopt) {
  RemoteConfig cfg;
  cfg.endpoint = endpoint;
  cfg.auth = std::move(auth);
  return std::make_unique<RemoteBackend>(std::move(cfg));
}

}  // namespace fatigue
