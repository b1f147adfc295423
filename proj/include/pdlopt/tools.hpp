#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pdlopt/json.hpp"
#include "pdlopt/type_spec.hpp"

namespace pdlopt {

class SearchClient;
class SandboxClient;

inline constexpr std::string_view kInvalidExpressionWarning =
    "Warning: the expression was invalid. Please provide a valid arithmetic expression.";

struct ToolSpec {
  std::string name;
  TypeSpec schema;  // of the arguments object
  std::string description;
};

struct ToolCall {
  std::string action;
  Json arguments = Json::object();
  friend bool operator==(const ToolCall&, const ToolCall&) = default;
};

struct FinishValue {
  std::string answer;
  friend bool operator==(const FinishValue&, const FinishValue&) = default;
};

struct Observation {
  std::string text;
  bool is_error_hint = false;
  friend bool operator==(const Observation&, const Observation&) = default;
};

/// How agents write actions: JSON objects, or <execute>/<solution> tags for
/// the code agent.
enum class ActionFormat { Json, Xml };

using ParsedAction = std::variant<ToolCall, FinishValue, Observation>;

/// Immutable once built; lookups are case-sensitive exact matches. Finish is
/// always registered.
class ToolRegistry {
 public:
  using Handler = std::function<Observation(const Json& arguments)>;

  struct Tool {
    ToolSpec spec;
    Handler run;
  };

  explicit ToolRegistry(ActionFormat format = ActionFormat::Json);

  /// Throws Error(InvalidArgument) for a duplicate name.
  ToolRegistry& add(ToolSpec spec, Handler handler);

  const Tool* find(std::string_view name) const;
  /// Registration order, Finish last.
  std::vector<ToolSpec> specs() const;
  ActionFormat format() const noexcept { return format_; }

  /// Runs a parsed call. Unknown tools and invalid arguments yield error-hint
  /// observations rather than exceptions.
  Observation invoke(const ToolCall& call) const;

 private:
  ActionFormat format_;
  std::vector<Tool> tools_;
};

/// Never throws on arbitrary input: every outcome is a ToolCall, a
/// FinishValue, or an error-hint Observation.
ParsedAction parse_action(std::string_view raw_model_text, const ToolRegistry& registry);

/// Canonical text for an action, as agents are expected to write it.
std::string render_action(const ToolCall& call, ActionFormat format);
std::string render_finish(std::string_view answer, ActionFormat format);

Observation tool_calc(std::string_view expr);
Observation tool_search(std::string_view query, SearchClient& client);
Observation tool_execute(std::string_view code, SandboxClient& sandbox, double timeout_s);

ToolSpec calc_spec();
ToolSpec search_spec();
ToolSpec execute_spec();
ToolSpec finish_spec();

ToolRegistry& add_calc(ToolRegistry& registry);
ToolRegistry& add_search(ToolRegistry& registry, std::shared_ptr<SearchClient> client);
ToolRegistry& add_execute(ToolRegistry& registry, std::shared_ptr<SandboxClient> sandbox, double timeout_s = 10.0);

}  // namespace pdlopt
