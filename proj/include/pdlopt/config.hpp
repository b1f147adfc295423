#pragma once

// Run configuration (YAML). Relative paths resolve against the directory of
// the configuration file. See docs/config.md for every field.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pdlopt/backend.hpp"
#include "pdlopt/interpreter.hpp"
#include "pdlopt/optimizer.hpp"
#include "pdlopt/search.hpp"
#include "pdlopt/tasks.hpp"

namespace pdlopt {

struct BackendSettings {
  enum class Kind { Scripted, Http };
  Kind kind = Kind::Http;
  std::string model = "default";
  std::optional<std::string> script;  // scripted rules file
  HttpBackendConfig http;
};

struct SearchSettings {
  enum class Kind { Fixture, Wikipedia };
  Kind kind = Kind::Fixture;
  std::optional<std::string> fixture;
  WikipediaConfig wikipedia;
};

struct RunConfig {
  TaskKind task = TaskKind::Gsm8k;
  std::string dataset;
  std::optional<std::string> train_bank;  // cross transfer: demonstrations from another dataset
  SplitSizes splits;
  SearchSpace space;
  std::size_t k = 100;
  std::size_t v_min = 16;
  std::optional<std::size_t> v_max;
  std::uint64_t seed = 0;
  std::size_t parallelism = 1;
  PatternLimits pattern_limits;
  Limits limits;
  int max_tokens = 1024;
  BackendSettings backend;
  SearchSettings search;
  std::optional<std::vector<std::string>> sandbox_command;
  std::optional<std::string> system_prompts_dir;
  std::string output_dir = "runs/latest";
};

/// Throws Error(Config) naming the offending field. Unknown keys are errors.
RunConfig parse_run_config(const Json& document, const std::string& base_dir = ".");
RunConfig load_run_config(const std::string& path);

/// Default search space of a task: every applicable pattern, n in {0, 3, 5},
/// all system prompt styles and the task's default instruction.
SearchSpace default_search_space(TaskKind task);

}  // namespace pdlopt
