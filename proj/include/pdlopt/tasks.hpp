#pragma once

// Datasets are JSONL, one instance per line. Fields per task:
//   gsm8k, gsm_hard: id, question, answer, steps?: [str]   (steps carry <<expr=result>>)
//   fever:           id, question (the claim), answer ("true" | "false"),
//                    evidence?: [{title, summary, sentences: [str]}]
//   mbpp:            id, question (the specification), answer (reference code),
//                    test?: str (prompt test case), hidden_tests?: [str]
// Everything except id, question and answer is kept in metadata.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pdlopt/json.hpp"
#include "pdlopt/kinds.hpp"
#include "pdlopt/tools.hpp"

namespace pdlopt {

class SandboxClient;
class SearchClient;

struct TaskInstance {
  std::string id;
  std::string question;
  std::string answer;
  Json metadata = Json::object();
  friend bool operator==(const TaskInstance&, const TaskInstance&) = default;
};

/// Throws Error(Io) when the file cannot be read and Error(DatasetSchema)
/// with path "line N" for malformed lines or duplicate ids.
std::vector<TaskInstance> load_dataset(const std::string& path, TaskKind task);
std::vector<TaskInstance> parse_dataset(std::string_view jsonl, TaskKind task, const std::string& source = "");

struct SplitSizes {
  std::size_t train = 0;
  std::size_t valid = 0;
  std::size_t test = 0;
};

struct Splits {
  std::vector<TaskInstance> train;
  std::vector<TaskInstance> valid;
  std::vector<TaskInstance> test;
};

/// Seeded shuffle, then valid, test and train are cut in that order. With a
/// cross-transfer bank, train comes from the (shuffled) bank instead; a
/// train size of 0 then means the whole bank. Throws
/// Error(InsufficientData), or Error(DatasetSchema) when bank ids collide
/// with validation or test ids.
Splits make_splits(const std::vector<TaskInstance>& instances, SplitSizes sizes, std::uint64_t seed,
                   const std::optional<std::vector<TaskInstance>>& cross_train_bank = std::nullopt);

struct Verdict {
  bool correct = false;
  std::optional<std::string> extracted;
  friend bool operator==(const Verdict&, const Verdict&) = default;
};

/// Canonical number: commas and a leading '+' removed, trailing fractional
/// zeros (and a bare '.') stripped, "-0" as "0". nullopt when not a number.
std::optional<std::string> normalize_number(std::string_view text);

/// Number after the last "The answer is" / "####" delimiter, else the last
/// number in the output; compared exactly after normalization.
Verdict eval_gsm8k(std::string_view model_output, std::string_view truth);

/// Last nonempty line, lowercased; exactly one of the words true/false must
/// occur and equal the truth.
Verdict eval_fever(std::string_view model_output, std::string_view truth);

/// The code inside <solution> tags or the last fenced block, else the text.
std::string extract_code(std::string_view model_output);

/// Runs the hidden tests in test-suite mode; correct iff all pass.
Verdict eval_mbpp(std::string_view solution_code, const std::vector<std::string>& hidden_tests,
                  SandboxClient& sandbox, double timeout_s = 10.0);

/// Dispatches to the task's evaluator. MBPP needs a sandbox
/// (Error(SandboxUnavailable) otherwise).
Verdict evaluate_answer(TaskKind task, std::string_view answer, const TaskInstance& instance,
                        SandboxClient* sandbox);

/// Per-task defaults.
std::string default_instruction(TaskKind task);
bool reactive_only(TaskKind task) noexcept;

/// Calc for GSM tasks, Search for FEVER, Execute for MBPP, plus Finish.
ToolRegistry make_task_registry(TaskKind task, std::shared_ptr<SearchClient> search,
                                std::shared_ptr<SandboxClient> sandbox);

}  // namespace pdlopt
