#pragma once

// Client side of the code-execution runner protocol: one JSON request line on
// the runner's stdin, one JSON response line on its stdout, one process per
// request.
//
//   request:  {"code": str, "timeout_s": num, "mode": "final_expression"|"test_suite",
//              "tests": [str]?}
//   response: {"status": "ok"|"exception"|"timeout", "output": str,
//              "traceback": str?, "per_test": [bool]?}

#include <optional>
#include <string>
#include <vector>

#include "pdlopt/json.hpp"

namespace pdlopt {

inline constexpr std::string_view kExecutedNoOutput = "[Executed Successfully with No Output]";
inline constexpr std::string_view kExecutionTimedOut = "[Execution Timed Out]";

struct SandboxRequest {
  enum class Mode { FinalExpression, TestSuite };
  std::string code;
  double timeout_s = 10.0;
  Mode mode = Mode::FinalExpression;
  std::optional<std::vector<std::string>> tests;  // present iff TestSuite
};

struct SandboxResponse {
  enum class Status { Ok, Exception, Timeout };
  Status status = Status::Ok;
  std::string output;
  std::optional<std::string> traceback;
  std::optional<std::vector<bool>> per_test;
};

/// Throws Error(InvalidArgument) unless timeout_s is in (0, 120] and tests
/// are present exactly for TestSuite requests.
void validate(const SandboxRequest& request);

Json to_json(const SandboxRequest& request);
/// Malformed responses become status=exception with a synthetic traceback.
SandboxResponse response_from_json(const Json& json);
Json to_json(const SandboxResponse& response);

class SandboxClient {
 public:
  virtual ~SandboxClient() = default;
  /// Throws Error(SandboxUnavailable) when no runner can be started.
  virtual SandboxResponse run(const SandboxRequest& request) = 0;
};

/// Spawns `command` for every request. The process is killed once
/// timeout_s + grace_s of wall-clock time has passed.
class ProcessSandboxClient final : public SandboxClient {
 public:
  explicit ProcessSandboxClient(std::vector<std::string> command, double grace_s = 0.25);

  /// Command from PDLOPT_SANDBOX_RUNNER (split on spaces); nullopt when unset.
  static std::optional<std::vector<std::string>> command_from_env();

  SandboxResponse run(const SandboxRequest& request) override;

 private:
  std::vector<std::string> command_;
  double grace_s_;
};

}  // namespace pdlopt
