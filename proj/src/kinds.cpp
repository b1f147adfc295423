#include "pdlopt/kinds.hpp"

#include <array>
#include <utility>

namespace pdlopt {

namespace {

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<std::pair<std::string_view, E>, N>& table, std::string_view text) {
  for (const auto& [name, value] : table)
    if (name == text) return value;
  return std::nullopt;
}

template <typename E, std::size_t N>
std::string_view name_of(const std::array<std::pair<std::string_view, E>, N>& table, E value) {
  for (const auto& [name, v] : table)
    if (v == value) return name;
  return "?";
}

constexpr std::array<std::pair<std::string_view, PatternKind>, 4> kPatterns{{
    {"zero_shot", PatternKind::ZeroShot},
    {"cot", PatternKind::CoT},
    {"rewoo", PatternKind::ReWOO},
    {"react", PatternKind::ReAct},
}};

constexpr std::array<std::pair<std::string_view, SystemPromptStyle>, 3> kStyles{{
    {"granite_tools", SystemPromptStyle::GraniteTools},
    {"llama3", SystemPromptStyle::Llama3},
    {"granite_llama", SystemPromptStyle::GraniteLlama},
}};

constexpr std::array<std::pair<std::string_view, TaskKind>, 4> kTasks{{
    {"gsm8k", TaskKind::Gsm8k},
    {"gsm_hard", TaskKind::GsmHard},
    {"fever", TaskKind::Fever},
    {"mbpp", TaskKind::Mbpp},
}};

}  // namespace

std::string_view to_string(PatternKind kind) noexcept { return name_of(kPatterns, kind); }
std::optional<PatternKind> parse_pattern_kind(std::string_view text) noexcept { return lookup(kPatterns, text); }

std::string_view to_string(SystemPromptStyle style) noexcept { return name_of(kStyles, style); }
std::optional<SystemPromptStyle> parse_system_prompt_style(std::string_view text) noexcept {
  return lookup(kStyles, text);
}

std::string_view to_string(TaskKind task) noexcept { return name_of(kTasks, task); }
std::optional<TaskKind> parse_task_kind(std::string_view text) noexcept { return lookup(kTasks, text); }

}  // namespace pdlopt
