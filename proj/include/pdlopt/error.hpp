#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pdlopt {

enum class ErrorCode {
  // program-model
  Yaml,
  UnknownBlock,
  DuplicateDef,
  UnboundPath,
  TemplateSyntax,
  InvalidProgram,
  // interpreter
  Unparseable,
  SchemaViolation,
  LimitExceeded,
  UnboundFunction,
  // pattern-library
  PatternDemoMismatch,
  ReWOOUnsupported,
  // trajectory-builder
  NoExpressions,
  NoEvidence,
  MissingTestCase,
  // task-suite
  Io,
  DatasetSchema,
  InsufficientData,
  // optimizer
  EmptySpace,
  InvalidArgument,
  // backends
  BackendTransport,
  BackendAuth,
  BackendOverflow,
  BackendProtocol,
  NoRuleMatched,
  // tools
  SandboxUnavailable,
  // cli
  Config,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Single exception type for the library. `path` locates the failure when one
/// exists, e.g. `text[1].repeat` or `dataset.jsonl:line 4`.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::string path = {})
      : std::runtime_error(compose(code, message, path)),
        code_(code),
        message_(std::move(message)),
        path_(std::move(path)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }
  const std::string& path() const noexcept { return path_; }

  /// Returns a copy located under `prefix` (outer block path first).
  Error under(std::string_view prefix) const {
    std::string p(prefix);
    if (!path_.empty()) {
      if (path_.front() != '[' && path_.front() != '.') p += '.';
      p += path_;
    }
    return Error(code_, message_, std::move(p));
  }

 private:
  static std::string compose(ErrorCode code, const std::string& message,
                             const std::string& path) {
    std::string out(to_string(code));
    if (!path.empty()) out += " at " + path;
    out += ": " + message;
    return out;
  }

  ErrorCode code_;
  std::string message_;
  std::string path_;
};

/// Backend failures that make further evaluation pointless.
inline bool is_backend_unavailable(ErrorCode code) noexcept {
  return code == ErrorCode::BackendTransport || code == ErrorCode::BackendAuth ||
         code == ErrorCode::BackendProtocol;
}

}  // namespace pdlopt
