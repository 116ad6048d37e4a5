#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace contron {

enum class ErrorCode {
  kIo,
  kEmptyDocument,
  kConverterFailure,
  kEmptyCorpus,
  kMissingDatabase,
  kCorruptDatabase,
  kSchemaViolation,
  kUnknownClass,
  kDisjointViolation,
  kNetworkError,
  kRateLimited,
  kMalformedResponse,
  kCacheMiss,
  kUndefinedMetric,
  kMalformedGold,
  kInvalidArgument,
  kNotFound,
  kConflict,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kEmptyDocument: return "EmptyDocument";
    case ErrorCode::kConverterFailure: return "ConverterFailure";
    case ErrorCode::kEmptyCorpus: return "EmptyCorpus";
    case ErrorCode::kMissingDatabase: return "MissingDatabase";
    case ErrorCode::kCorruptDatabase: return "CorruptDatabase";
    case ErrorCode::kSchemaViolation: return "SchemaViolation";
    case ErrorCode::kUnknownClass: return "UnknownClass";
    case ErrorCode::kDisjointViolation: return "DisjointViolation";
    case ErrorCode::kNetworkError: return "NetworkError";
    case ErrorCode::kRateLimited: return "RateLimited";
    case ErrorCode::kMalformedResponse: return "MalformedResponse";
    case ErrorCode::kCacheMiss: return "CacheMiss";
    case ErrorCode::kUndefinedMetric: return "UndefinedMetric";
    case ErrorCode::kMalformedGold: return "MalformedGold";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kNotFound: return "NotFound";
    case ErrorCode::kConflict: return "Conflict";
  }
  return "Unknown";
}

/// Every failure surfaced by the library carries one of the codes above so
/// callers (CLI exit status, HTTP status mapping) can branch without parsing
/// messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace contron
