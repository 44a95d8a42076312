#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bpnet {

enum class ErrorCode {
  kArgument,
  kDomain,
  kShape,
  kIo,
  kManifest,
  kConfig,
  kDiverged,
};

inline std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kArgument: return "E_ARGUMENT";
    case ErrorCode::kDomain: return "E_DOMAIN";
    case ErrorCode::kShape: return "E_SHAPE";
    case ErrorCode::kIo: return "E_IO";
    case ErrorCode::kManifest: return "E_MANIFEST";
    case ErrorCode::kConfig: return "E_CONFIG";
    case ErrorCode::kDiverged: return "E_DIVERGED";
  }
  return "E_UNKNOWN";
}

/// Every failure raised by the library carries one of the codes above so the
/// CLI can report it on a single machine-parsable line.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace bpnet
