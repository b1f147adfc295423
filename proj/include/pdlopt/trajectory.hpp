#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "pdlopt/json.hpp"
#include "pdlopt/kinds.hpp"
#include "pdlopt/tasks.hpp"
#include "pdlopt/tools.hpp"

namespace pdlopt {

namespace step {
struct Thought {
  std::string text;
  friend bool operator==(const Thought&, const Thought&) = default;
};
struct Action {
  ToolCall call;
  friend bool operator==(const Action&, const Action&) = default;
};
struct Observation {
  std::string text;
  friend bool operator==(const Observation&, const Observation&) = default;
};
struct Finish {
  std::string value;
  friend bool operator==(const Finish&, const Finish&) = default;
};
}  // namespace step

struct Step {
  std::variant<step::Thought, step::Action, step::Observation, step::Finish> value;
  friend bool operator==(const Step&, const Step&) = default;
};

struct Trajectory {
  std::string question;  // rendered ahead of the steps
  std::vector<Step> steps;
  PatternKind kind = PatternKind::ReAct;
  TaskKind task = TaskKind::Gsm8k;
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct QAPair {
  std::string question;
  std::optional<std::string> reasoning;
  std::string answer;
  friend bool operator==(const QAPair&, const QAPair&) = default;
};

struct Demonstration {
  std::variant<QAPair, Trajectory> value;
  friend bool operator==(const Demonstration&, const Demonstration&) = default;
};

/// Throws Error(InvalidArgument) naming the broken rule: nonempty; ReAct ends
/// with Finish; ReWOO has no Observation or Finish; Observation follows an
/// Action.
void check_trajectory(const Trajectory& trajectory);

/// GSM8K: one Calc step per `<<expr=result>>` annotation. ReWOO replaces
/// earlier results with #E1..#En. Throws Error(NoExpressions).
Trajectory build_gsm8k_trajectory(const TaskInstance& instance, PatternKind kind);

/// FEVER: one Search per evidence article in annotation order. Throws
/// Error(NoEvidence).
Trajectory build_fever_trajectory(const TaskInstance& instance, PatternKind kind);
QAPair build_fever_qa(const TaskInstance& instance);

/// MBPP: run the ground truth against the prompt test, then submit it.
/// Throws Error(MissingTestCase).
Trajectory build_mbpp_trajectory(const TaskInstance& instance);

/// The two fixed fail-then-fix coding trajectories.
const std::vector<Trajectory>& refinement_examples();

/// GSM8K reasoning with calculator annotations removed.
QAPair build_gsm8k_qa(const TaskInstance& instance);

/// Demonstration used by `kind` for an instance (QAPair for CoT, trajectory
/// for ReAct / ReWOO). Propagates the builders' errors.
Demonstration build_demonstration(const TaskInstance& instance, TaskKind task, PatternKind kind);

/// The ReAct/ReWOO step format of a task: XML tags for coding, JSON otherwise.
ActionFormat action_format(TaskKind task) noexcept;

/// Trajectory JSONL record: {task, kind, question, steps: [{type, ...}]}.
Json trajectory_to_json(const Trajectory& trajectory);
Trajectory trajectory_from_json(const Json& json);

}  // namespace pdlopt
