#include "pdlopt/error.hpp"

namespace pdlopt {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Yaml: return "YamlError";
    case ErrorCode::UnknownBlock: return "UnknownBlock";
    case ErrorCode::DuplicateDef: return "DuplicateDef";
    case ErrorCode::UnboundPath: return "UnboundPath";
    case ErrorCode::TemplateSyntax: return "TemplateSyntax";
    case ErrorCode::InvalidProgram: return "InvalidProgram";
    case ErrorCode::Unparseable: return "Unparseable";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::LimitExceeded: return "LimitExceeded";
    case ErrorCode::UnboundFunction: return "UnboundFunction";
    case ErrorCode::PatternDemoMismatch: return "PatternDemoMismatch";
    case ErrorCode::ReWOOUnsupported: return "ReWOOUnsupported";
    case ErrorCode::NoExpressions: return "NoExpressions";
    case ErrorCode::NoEvidence: return "NoEvidence";
    case ErrorCode::MissingTestCase: return "MissingTestCase";
    case ErrorCode::Io: return "IoError";
    case ErrorCode::DatasetSchema: return "SchemaError";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::EmptySpace: return "EmptySpace";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::BackendTransport: return "TransportError";
    case ErrorCode::BackendAuth: return "AuthError";
    case ErrorCode::BackendOverflow: return "OverflowError";
    case ErrorCode::BackendProtocol: return "ProtocolError";
    case ErrorCode::NoRuleMatched: return "NoRuleMatched";
    case ErrorCode::SandboxUnavailable: return "SandboxUnavailable";
    case ErrorCode::Config: return "ConfigError";
  }
  return "Error";
}

}  // namespace pdlopt
