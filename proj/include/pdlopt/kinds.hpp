#pragma once

#include <optional>
#include <string_view>

namespace pdlopt {

enum class PatternKind { ZeroShot, CoT, ReWOO, ReAct };

/// Names: zero_shot, cot, rewoo, react (also the library function names).
std::string_view to_string(PatternKind kind) noexcept;
std::optional<PatternKind> parse_pattern_kind(std::string_view text) noexcept;

enum class SystemPromptStyle { GraniteTools, Llama3, GraniteLlama };

/// Names: granite_tools, llama3, granite_llama.
std::string_view to_string(SystemPromptStyle style) noexcept;
std::optional<SystemPromptStyle> parse_system_prompt_style(std::string_view text) noexcept;

enum class TaskKind { Gsm8k, GsmHard, Fever, Mbpp };

/// Names: gsm8k, gsm_hard, fever, mbpp.
std::string_view to_string(TaskKind task) noexcept;
std::optional<TaskKind> parse_task_kind(std::string_view text) noexcept;

}  // namespace pdlopt
