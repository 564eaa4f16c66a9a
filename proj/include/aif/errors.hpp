#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace aif {

enum class ErrorCode {
  InvalidDistribution,
  InvalidModel,
  UnknownLabel,
  ZeroEvidence,
  DegenerateModel,
  CapExceeded,
  NoConsensus,
  ImmutableLayer,
  BudgetExhausted,
  SchemaViolation,
  VocabularyMismatch,
  NoCapablePath,
  InsufficientEpisodes,
  ProviderUnavailable,
  NoHypothesis,
  ConfigError,
  MalformedTrace,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidDistribution: return "InvalidDistribution";
    case ErrorCode::InvalidModel: return "InvalidModel";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::ZeroEvidence: return "ZeroEvidence";
    case ErrorCode::DegenerateModel: return "DegenerateModel";
    case ErrorCode::CapExceeded: return "CapExceeded";
    case ErrorCode::NoConsensus: return "NoConsensus";
    case ErrorCode::ImmutableLayer: return "ImmutableLayer";
    case ErrorCode::BudgetExhausted: return "BudgetExhausted";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::VocabularyMismatch: return "VocabularyMismatch";
    case ErrorCode::NoCapablePath: return "NoCapablePath";
    case ErrorCode::InsufficientEpisodes: return "InsufficientEpisodes";
    case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::NoHypothesis: return "NoHypothesis";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::MalformedTrace: return "MalformedTrace";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the named codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, std::string_view message) {
  if (!condition) fail(code, std::string(message));
}

}  // namespace aif
