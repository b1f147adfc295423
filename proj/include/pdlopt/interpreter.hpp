#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <vector>

#include "pdlopt/backend.hpp"
#include "pdlopt/json.hpp"
#include "pdlopt/program.hpp"
#include "pdlopt/tools.hpp"

namespace pdlopt {

class SandboxClient;

struct Limits {
  int max_model_calls = 25;
  std::chrono::duration<double> max_wall{300.0};
};

/// Messages accumulated implicitly while a program runs, in execution order.
struct Context {
  std::vector<ChatMessage> messages;
};

struct ExecutionResult {
  std::string output;  // concatenation of block outputs
  Context context;
  Json bindings = Json::object();  // final top-level frame
  int model_calls = 0;
  int tool_calls = 0;
};

struct ExecutionOptions {
  Limits limits;
  double temperature = 0.0;
  int max_tokens = 1024;
  // Required only by programs with sandbox code blocks or Execute actions.
  std::shared_ptr<SandboxClient> sandbox;
};

/// Runs a program. `initial_scope` must be a JSON object; its members are the
/// outermost bindings.
///
/// Calls resolve to, in order: functions defined in enclosing scopes, the
/// builtins below, then the pattern library.
///   parse_action(text)       -> {kind: "call"|"finish"|"error", answer, ...}; answer is "" unless finish
///   run_action(action)       -> observation text, emitted as "Obs: ..." with role tool
///   run_plan(plan)           -> "#E1 = ..." evidence lines, emitted with role tool
///   render_demonstrations(demonstrations) -> strings joined by blank lines
///   <tool name>(arguments...) -> observation text, emitted with role tool
///
/// Errors carry the failing block's path. LimitExceeded when the model-call
/// or wall-clock budget runs out.
ExecutionResult execute_program(const Program& program, const Json& initial_scope, Backend& backend,
                                const ToolRegistry& tools, const ExecutionOptions& options = {});

/// The program's answer: the top-level `answer` binding when present (strings
/// verbatim, other values as compact JSON), else the output.
std::string program_answer(const ExecutionResult& result);

}  // namespace pdlopt
