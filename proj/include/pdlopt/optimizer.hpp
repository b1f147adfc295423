#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pdlopt/interpreter.hpp"
#include "pdlopt/kinds.hpp"
#include "pdlopt/patterns.hpp"
#include "pdlopt/tasks.hpp"

namespace pdlopt {

struct SearchSpace {
  std::vector<PatternKind> patterns;
  std::vector<int> num_demonstrations;
  std::vector<SystemPromptStyle> system_prompts;
  std::vector<std::string> instructions;
  bool reactive_only = false;  // ReWOO must not appear in `patterns`
  bool json_tools = true;      // system prompts apply to ReAct only when tools are called in JSON
};

/// Throws Error(EmptySpace) for an empty dimension, Error(ReWOOUnsupported)
/// for ReWOO in a reactive-only space, Error(InvalidArgument) for negative
/// demonstration counts.
void validate(const SearchSpace& space);

struct Candidate {
  PatternKind pattern = PatternKind::ZeroShot;
  int n = 0;
  std::vector<std::size_t> demo_ids;  // indices into the demonstration bank
  std::optional<SystemPromptStyle> system_prompt;
  std::string instruction;
  std::size_t index = 0;  // sampling order
  friend bool operator==(const Candidate&, const Candidate&) = default;
};

Json candidate_to_json(const Candidate& candidate);

/// SplitMix64 of (seed, index): the RNG stream of one candidate.
std::uint64_t candidate_seed(std::uint64_t master_seed, std::size_t index) noexcept;

/// k candidates, each drawn uniformly over the dimension product with
/// demonstrations drawn with replacement. When 0 is a demonstration count,
/// candidate 0 is Zero-Shot. Zero-Shot candidates always have n = 0.
std::vector<Candidate> sample_candidates(const SearchSpace& space, std::size_t k, std::size_t train_bank_size,
                                         std::uint64_t seed);

/// What is needed to turn a candidate into a program.
struct TaskSetup {
  TaskKind task = TaskKind::Gsm8k;
  std::vector<TaskInstance> bank;  // demonstration bank, every entry usable by every pattern in the space
  std::vector<ToolSpec> tools;
  PatternLimits limits;
  std::string model = "default";
  const SystemPrompts* system_prompts = nullptr;
};

/// Instances of `train` from which every pattern in `patterns` can build a
/// demonstration, in input order. `skipped` receives the number dropped.
std::vector<TaskInstance> usable_bank(const std::vector<TaskInstance>& train, TaskKind task,
                                      const std::vector<PatternKind>& patterns, std::size_t* skipped = nullptr);

/// The candidate's demonstrations in demo_ids order. Coding ReAct candidates
/// get the two refinement examples first.
std::vector<Demonstration> materialize_demos(const Candidate& candidate, const TaskSetup& setup);

/// The program that evaluates `winner`: Data blocks with the literal
/// demonstrations and a call to the library pattern.
Program emit_optimized_program(const Candidate& winner, const std::vector<Demonstration>& demos,
                               const TaskSetup& setup);

/// emit_optimized_program with the candidate's own demonstrations.
Program candidate_program(const Candidate& candidate, const TaskSetup& setup);

using AnswerEvaluator = std::function<Verdict(std::string_view answer, const TaskInstance& instance)>;

struct InstanceResult {
  std::string id;
  bool correct = false;
  std::optional<std::string> extracted;
  std::string answer;
  std::optional<std::string> error;  // execution failure, counted as incorrect
  int model_calls = 0;
};

Json instance_result_to_json(const InstanceResult& result);

/// Runs one instance with `question` bound. Failures count as incorrect,
/// except backend unavailability and a missing sandbox, which propagate.
InstanceResult run_instance(const Program& program, const TaskInstance& instance, Backend& backend,
                            const ToolRegistry& tools, const AnswerEvaluator& evaluate,
                            const ExecutionOptions& options = {});

/// -(correct / |subset|), in [-1, 0].
double candidate_loss(const Candidate& candidate, std::span<const TaskInstance> subset, const TaskSetup& setup,
                      Backend& backend, const ToolRegistry& tools, const AnswerEvaluator& evaluate,
                      const ExecutionOptions& options = {});

/// Loss of a candidate on a validation prefix.
using LossFn = std::function<double(const Candidate&, std::span<const TaskInstance>)>;

/// candidate_loss with per-(candidate index, instance id) verdicts cached,
/// so growing prefixes only run the new instances. Safe for concurrent use.
class CachedLoss {
 public:
  CachedLoss(TaskSetup setup, Backend& backend, const ToolRegistry& tools, AnswerEvaluator evaluate,
             ExecutionOptions options = {});
  ~CachedLoss();
  CachedLoss(const CachedLoss&) = delete;
  CachedLoss& operator=(const CachedLoss&) = delete;

  double operator()(const Candidate& candidate, std::span<const TaskInstance> subset);
  std::size_t executions() const;
  LossFn as_fn();

 private:
  struct State;
  std::unique_ptr<State> state_;
};

struct RoundRecord {
  int round = 0;  // 1-based
  std::size_t subset_size = 0;
  std::vector<std::size_t> survivors;               // candidate indices, best first
  std::vector<std::pair<std::size_t, double>> losses;  // by candidate index
  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

Json round_to_json(const RoundRecord& record);

struct HalvingResult {
  Candidate winner;
  std::vector<RoundRecord> rounds;
};

/// While more than one candidate remains: score all on the first v
/// instances, keep the floor(|C|/2) lowest losses (ties to the lower
/// index), v = min(v_max, 2v). Survivors of a round are scored concurrently
/// by up to `parallelism` threads.
HalvingResult successive_halving(const std::vector<Candidate>& candidates,
                                 const std::vector<TaskInstance>& d_valid_ordered, std::size_t v_min,
                                 std::size_t v_max, const LossFn& loss, std::size_t parallelism = 1);

struct EvaluationReport {
  double accuracy = 0.0;
  std::vector<InstanceResult> results;
};

/// Throws Error(InvalidArgument) for an empty split.
EvaluationReport evaluate_final(const Program& program, const std::vector<TaskInstance>& test_split,
                                Backend& backend, const ToolRegistry& tools, const AnswerEvaluator& evaluate,
                                const ExecutionOptions& options = {}, std::size_t parallelism = 1);

struct OptimizationResult {
  Candidate winner;
  std::vector<RoundRecord> rounds;
  Program emitted_program;
  std::optional<double> test_accuracy;
  std::vector<InstanceResult> test_results;
};

struct OptimizeSettings {
  SearchSpace space;
  std::size_t k = 100;
  std::size_t v_min = 16;
  std::optional<std::size_t> v_max;  // |D_valid| when absent
  std::uint64_t seed = 0;
  std::size_t parallelism = 1;
};

/// Races sampled candidates on splits.valid. The emitted winner is then
/// scored on splits.test unless that split is empty. `setup.bank` is
/// replaced by usable_bank(splits.train).
OptimizationResult optimize(const OptimizeSettings& settings, const Splits& splits, TaskSetup setup,
                            Backend& backend, const ToolRegistry& tools, const AnswerEvaluator& evaluate,
                            const ExecutionOptions& options = {});

/// One round per line, then {"type": "result", "winner": ..., "test_accuracy": ...}.
std::string experiment_log(const OptimizationResult& result);

}  // namespace pdlopt
