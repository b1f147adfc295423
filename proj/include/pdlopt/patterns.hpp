#pragma once

// The four prompting patterns as DSL functions. Every library function takes
// the same parameters:
//   question, instruction, demonstrations ([str], rendered), model,
//   tools ([tool spec]), system (str; ReAct only)
// and returns its final answer.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pdlopt/kinds.hpp"
#include "pdlopt/program.hpp"
#include "pdlopt/tools.hpp"
#include "pdlopt/trajectory.hpp"

namespace pdlopt {

struct PatternLimits {
  int max_tao_iterations = 7;    // JSON tool-calling loops
  int max_execute_attempts = 5;  // coding loops (XML actions)
};

/// Replaceable texts of the system prompt styles. Each may reference
/// `${ tools }`, which is rendered at instantiation time.
struct SystemPrompts {
  std::map<SystemPromptStyle, std::string> texts;

  static const SystemPrompts& defaults();
  /// Reads <dir>/<style name>.txt for every style; missing files keep the
  /// default text.
  static SystemPrompts load(const std::string& dir);
};

struct PatternOptions {
  PatternKind kind = PatternKind::ZeroShot;
  std::string instruction;
  std::vector<Demonstration> demos;
  std::vector<ToolSpec> tools;
  std::optional<SystemPromptStyle> style;
  PatternLimits limits;
  std::string model = "default";
  ActionFormat format = ActionFormat::Json;
  bool reactive_only = false;
  const SystemPrompts* system_prompts = nullptr;  // defaults when null
};

/// The library function for a pattern with a given agent-loop bound.
FunctionDef pattern_function(PatternKind kind, int loop_limit);

/// Library functions with default limits, in pattern order.
const std::vector<FunctionDef>& pattern_library();
const FunctionDef* library_function(std::string_view name);

/// The library as a program of FunctionDef blocks (what lib/patterns.pdl.yaml
/// holds).
Program pattern_library_program();

/// A self-contained program: Data blocks binding the arguments, the pattern's
/// FunctionDef, and a call binding `answer`. `${ question }` stays free.
/// CoT without demonstrations is Zero-Shot. Throws PatternDemoMismatch or
/// ReWOOUnsupported.
Program instantiate_pattern(const PatternOptions& options);

/// As instantiate_pattern, but the FunctionDef is left out when the library
/// version is identical, so the program calls the library by name.
Program pattern_program(const PatternOptions& options, bool inline_function);

/// QAPair: "Q: {q}\nA: {reasoning}\nThe answer is {a}". Trajectory:
/// "Question: ..." then one "Tho:", "Act:" or "Obs:" line per step; Finish is
/// an Act line.
std::string render_demonstration(const Demonstration& demo);

/// Demonstrations separated by blank lines. Throws PatternDemoMismatch when a
/// demonstration does not suit `kind`.
std::string render_demonstrations(const std::vector<Demonstration>& demos, PatternKind kind);

void check_demos(PatternKind kind, const std::vector<Demonstration>& demos);

/// [{name, description, parameters}] for prompts.
Json tool_specs_json(const std::vector<ToolSpec>& tools);

}  // namespace pdlopt
