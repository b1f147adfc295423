#include "pdlopt/tools.hpp"

#include "pdlopt/calc.hpp"
#include "pdlopt/error.hpp"
#include "pdlopt/repair.hpp"
#include "pdlopt/sandbox.hpp"
#include "pdlopt/search.hpp"

namespace pdlopt {

namespace {

constexpr std::string_view kFinish = "Finish";
constexpr std::string_view kExecute = "Execute";

std::string tool_names(const ToolRegistry& registry) {
  std::string out;
  for (const auto& spec : registry.specs()) {
    if (!out.empty()) out += ", ";
    out += spec.name;
  }
  return out;
}

Observation hint(std::string text) { return {std::move(text), true}; }

std::string answer_text(const Json& answer) {
  return answer.is_string() ? answer.get<std::string>() : answer.dump();
}

// Body of the first <tag>...</tag>; an unclosed tag runs to the end.
std::optional<std::pair<std::size_t, std::string>> tag_body(std::string_view text, std::string_view tag) {
  const std::string open = "<" + std::string(tag) + ">";
  const std::string close = "</" + std::string(tag) + ">";
  auto start = text.find(open);
  if (start == std::string_view::npos) return std::nullopt;
  auto body = start + open.size();
  auto end = text.find(close, body);
  std::string_view content = text.substr(body, end == std::string_view::npos ? std::string_view::npos : end - body);
  // Trim one leading and trailing newline so tags may sit on their own lines.
  if (!content.empty() && content.front() == '\n') content.remove_prefix(1);
  if (!content.empty() && content.back() == '\n') content.remove_suffix(1);
  return std::make_pair(start, std::string(content));
}

ParsedAction parse_xml_action(std::string_view raw) {
  auto solution = tag_body(raw, "solution");
  auto execute = tag_body(raw, "execute");
  if (solution && (!execute || solution->first < execute->first)) return FinishValue{solution->second};
  if (execute) return ToolCall{std::string(kExecute), Json{{"code", execute->second}}};
  return hint(
      "Invalid action: put code to run inside <execute></execute> tags, or your final solution inside "
      "<solution></solution> tags.");
}

}  // namespace

ToolRegistry::ToolRegistry(ActionFormat format) : format_(format) {
  tools_.push_back({finish_spec(), nullptr});
}

ToolRegistry& ToolRegistry::add(ToolSpec spec, Handler handler) {
  if (find(spec.name) != nullptr)
    throw Error(ErrorCode::InvalidArgument, "tool '" + spec.name + "' is already registered");
  tools_.insert(tools_.end() - 1, Tool{std::move(spec), std::move(handler)});
  return *this;
}

const ToolRegistry::Tool* ToolRegistry::find(std::string_view name) const {
  for (const auto& tool : tools_)
    if (tool.spec.name == name) return &tool;
  return nullptr;
}

std::vector<ToolSpec> ToolRegistry::specs() const {
  std::vector<ToolSpec> out;
  for (const auto& tool : tools_) out.push_back(tool.spec);
  return out;
}

Observation ToolRegistry::invoke(const ToolCall& call) const {
  const Tool* tool = find(call.action);
  if (tool == nullptr)
    return hint("Unknown action \"" + call.action + "\". Available actions: " + tool_names(*this) + ".");
  if (!tool->run) return hint("The " + call.action + " action cannot be executed as a tool.");
  auto result = validate_value(call.arguments, tool->spec.schema);
  if (!result.ok()) {
    const auto& v = result.violations.front();
    return hint("Invalid arguments for action \"" + call.action + "\": " + v.path + ": " + v.message + ".");
  }
  return tool->run(call.arguments);
}

ParsedAction parse_action(std::string_view raw, const ToolRegistry& registry) {
  try {
    if (registry.format() == ActionFormat::Xml) return parse_xml_action(raw);

    Json value;
    try {
      value = parse_model_output(raw, tool_call_spec());
    } catch (const Error& e) {
      if (e.code() == ErrorCode::SchemaViolation)
        return hint("Invalid action: " + e.path() + ": " + e.message() +
                    ". Respond with {\"action\": <tool name>, \"arguments\": {...}}.");
      return hint(
          "Invalid action: could not parse a JSON action. Respond with {\"action\": <tool name>, "
          "\"arguments\": {...}}.");
    }

    ToolCall call{value["action"].get<std::string>(), value["arguments"]};
    const auto* tool = registry.find(call.action);
    if (tool == nullptr)
      return hint("Unknown action \"" + call.action + "\". Available actions: " + tool_names(registry) + ".");
    auto result = validate_value(call.arguments, tool->spec.schema);
    if (!result.ok()) {
      const auto& v = result.violations.front();
      return hint("Invalid arguments for action \"" + call.action + "\": " + v.path + ": " + v.message + ".");
    }
    if (call.action == kFinish) return FinishValue{answer_text(call.arguments["answer"])};
    return call;
  } catch (const std::exception& e) {
    return hint(std::string("Invalid action: ") + e.what());
  }
}

std::string render_action(const ToolCall& call, ActionFormat format) {
  if (format == ActionFormat::Xml && call.action == kExecute)
    return "<execute>\n" + call.arguments.value("code", std::string()) + "\n</execute>";
  Json out;
  out["action"] = call.action;
  out["arguments"] = call.arguments;
  return out.dump();
}

std::string render_finish(std::string_view answer, ActionFormat format) {
  if (format == ActionFormat::Xml) return "<solution>\n" + std::string(answer) + "\n</solution>";
  Json out;
  out["action"] = kFinish;
  out["arguments"] = Json{{"answer", answer}};
  return out.dump();
}

Observation tool_calc(std::string_view expr) {
  auto result = calc::evaluate(calc::clean(expr));
  if (!result) return hint(std::string(kInvalidExpressionWarning));
  return {*result, false};
}

Observation tool_search(std::string_view query, SearchClient& client) {
  if (query.find_first_not_of(" \t\n") == std::string_view::npos)
    return hint("The search query was empty. Please provide something to search for.");
  SearchOutcome outcome;
  try {
    outcome = client.lookup(query);
  } catch (const Error& e) {
    return hint("Search is currently unavailable (" + e.message() + "). Please try again.");
  }
  switch (outcome.kind) {
    case SearchOutcome::Kind::Found: return {outcome.summary, false};
    case SearchOutcome::Kind::NoResults:
      return hint("Could not find any results for \"" + std::string(query) +
                  "\". Try again with a different or more specific query.");
    case SearchOutcome::Kind::Ambiguous: {
      std::string text = "\"" + std::string(query) + "\" is ambiguous. Possible disambiguations:";
      for (const auto& title : outcome.titles) text += "\n" + title;
      return hint(std::move(text));
    }
  }
  return hint("Search failed.");
}

Observation tool_execute(std::string_view code, SandboxClient& sandbox, double timeout_s) {
  SandboxRequest request;
  request.code = std::string(code);
  request.timeout_s = timeout_s;
  request.mode = SandboxRequest::Mode::FinalExpression;
  SandboxResponse response = sandbox.run(request);
  switch (response.status) {
    case SandboxResponse::Status::Ok:
      return {response.output.empty() ? std::string(kExecutedNoOutput) : response.output, false};
    case SandboxResponse::Status::Exception:
      return {response.traceback.value_or(response.output), true};
    case SandboxResponse::Status::Timeout: return {std::string(kExecutionTimedOut), true};
  }
  return hint("Execution failed.");
}

ToolSpec calc_spec() {
  return {"Calc", TypeSpec::object({{"expr", TypeSpec::string()}}, {"expr"}),
          "Evaluates an arithmetic expression, e.g. {\"expr\": \"48/4\"}."};
}

ToolSpec search_spec() {
  return {"Search", TypeSpec::object({{"query", TypeSpec::string()}}, {"query"}),
          "Returns the summary of the first Wikipedia search result for a query."};
}

ToolSpec execute_spec() {
  return {"Execute", TypeSpec::object({{"code", TypeSpec::string()}}, {"code"}),
          "Runs Python code and returns the value of the final expression or the traceback."};
}

ToolSpec finish_spec() {
  return {std::string(kFinish), TypeSpec::object({{"answer", TypeSpec::any()}}, {"answer"}),
          "Ends the task and returns the answer."};
}

ToolRegistry& add_calc(ToolRegistry& registry) {
  return registry.add(calc_spec(), [](const Json& args) { return tool_calc(args.at("expr").get<std::string>()); });
}

ToolRegistry& add_search(ToolRegistry& registry, std::shared_ptr<SearchClient> client) {
  if (!client) throw Error(ErrorCode::InvalidArgument, "Search needs a search client");
  return registry.add(search_spec(), [client = std::move(client)](const Json& args) {
    return tool_search(args.at("query").get<std::string>(), *client);
  });
}

ToolRegistry& add_execute(ToolRegistry& registry, std::shared_ptr<SandboxClient> sandbox, double timeout_s) {
  return registry.add(execute_spec(), [sandbox = std::move(sandbox), timeout_s](const Json& args) {
    if (!sandbox) throw Error(ErrorCode::SandboxUnavailable, "no sandbox runner configured");
    return tool_execute(args.at("code").get<std::string>(), *sandbox, timeout_s);
  });
}

}  // namespace pdlopt
