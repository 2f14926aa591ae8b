// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fatigue {

enum class ErrorKind {
  InvalidConfig,
  ContextOverflow,
  BackendUnavailable,
  ProtocolError,
  TokenizationError,
  ScriptExhausted,
  SliceOutOfRange,
  DimensionMismatch,
  AllChannelsUnavailable,
  DegenerateDistribution,
  PromptTooLong,
  CorruptTrace,
  UnknownRun,
  InvalidKnob,
  CapacityExceeded,
  CorpusMissing,
  SinkOverflow,
  RunCancelled,
};

inline constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::ContextOverflow: return "ContextOverflow";
    case ErrorKind::BackendUnavailable: return "BackendUnavailable";
    case ErrorKind::ProtocolError: return "ProtocolError";
    case ErrorKind::TokenizationError: return "TokenizationError";
    case ErrorKind::ScriptExhausted: return "ScriptExhausted";
    case ErrorKind::SliceOutOfRange: return "SliceOutOfRange";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::AllChannelsUnavailable: return "AllChannelsUnavailable";
    case ErrorKind::DegenerateDistribution: return "DegenerateDistribution";
    case ErrorKind::PromptTooLong: return "PromptTooLong";
    case ErrorKind::CorruptTrace: return "CorruptTrace";
    case ErrorKind::UnknownRun: return "UnknownRun";
    case ErrorKind::InvalidKnob: return "InvalidKnob";
    case ErrorKind::CapacityExceeded: return "CapacityExceeded";
    case ErrorKind::CorpusMissing: return "CorpusMissing";
    case ErrorKind::SinkOverflow: return "SinkOverflow";
    case ErrorKind::RunCancelled: return "RunCancelled";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Backend-side failures (unavailable, protocol, exhausted script). The CLI maps these to exit 3.
inline bool is_backend_error(ErrorKind kind) noexcept {
  return kind == ErrorKind::BackendUnavailable || kind == ErrorKind::ProtocolError ||
         kind == ErrorKind::ScriptExhausted || kind == ErrorKind::TokenizationError ||
         kind == ErrorKind::ContextOverflow;
}

}  // namespace fatigue
