#include "pdlopt/interpreter.hpp"

#include <spdlog/spdlog.h>

#include <map>
#include <regex>
#include <sstream>

#include "pdlopt/error.hpp"
#include "pdlopt/patterns.hpp"
#include "pdlopt/repair.hpp"
#include "pdlopt/sandbox.hpp"
#include "pdlopt/template.hpp"

namespace pdlopt {

namespace {

struct Frame;

struct Closure {
  const FunctionDef* def = nullptr;
  Frame* frame = nullptr;  // defining frame; null for library functions
};

struct Frame {
  Json bindings = Json::object();
  std::map<std::string, Closure, std::less<>> functions;
  Frame* parent = nullptr;

  const Json* lookup(std::string_view name) const {
    for (const Frame* f = this; f != nullptr; f = f->parent) {
      auto it = f->bindings.find(std::string(name));
      if (it != f->bindings.end()) return &*it;
    }
    return nullptr;
  }

  std::optional<Closure> function(std::string_view name) const {
    for (const Frame* f = this; f != nullptr; f = f->parent) {
      auto it = f->functions.find(name);
      if (it != f->functions.end()) return it->second;
    }
    return std::nullopt;
  }
};

struct CallOutcome {
  Json value;
  std::string output;
};

class Interpreter {
 public:
  Interpreter(Backend& backend, const ToolRegistry& tools, const ExecutionOptions& options)
      : backend_(backend), tools_(tools), options_(options), start_(std::chrono::steady_clock::now()) {}

  std::string exec(const Block& block, Frame& frame, const std::string& path, std::optional<Role> inherited) {
    check_clock(path);
    return std::visit([&](const auto& b) { return run(b, frame, path, inherited); }, block.node);
  }

  Context context;
  int model_calls = 0;
  int tool_calls = 0;

 private:
  template <typename F>
  static auto located(const std::string& path, F&& f) -> decltype(f()) {
    try {
      return f();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::LimitExceeded || is_backend_unavailable(e.code())) throw;
      const std::string detail = e.path().empty() ? e.message() : e.path() + ": " + e.message();
      throw Error(e.code(), detail, path);
    }
  }

  static Lookup lookup_in(const Frame& frame) {
    return [&frame](std::string_view name) { return frame.lookup(name); };
  }

  void emit(Role role, const std::string& content) {
    if (!content.empty()) context.messages.push_back({role, content});
  }

  void check_clock(const std::string& path) const {
    if (std::chrono::steady_clock::now() - start_ > options_.limits.max_wall)
      throw Error(ErrorCode::LimitExceeded, "wall-clock budget exhausted", path);
  }

  static std::string child(const std::string& path, std::string_view key) {
    return path.empty() ? std::string(key) : path + "." + std::string(key);
  }

  std::string run(const TextBlock& t, Frame& frame, const std::string& path, std::optional<Role> inherited) {
    const Role role = t.role.value_or(inherited.value_or(Role::User));
    std::string out;
    for (std::size_t i = 0; i < t.items.size(); ++i) {
      const std::string item_path = child(path, "text") + "[" + std::to_string(i) + "]";
      if (const auto* s = std::get_if<std::string>(&t.items[i].value)) {
        std::string rendered = located(item_path, [&] { return render_template(*s, lookup_in(frame)); });
        emit(role, rendered);
        out += rendered;
      } else {
        out += exec(*std::get<Box<Block>>(t.items[i].value), frame, item_path, t.role ? t.role : inherited);
      }
    }
    if (t.def) frame.bindings[*t.def] = out;
    return out;
  }

  std::string run(const ModelBlock& m, Frame& frame, const std::string& path, std::optional<Role>) {
    ChatRequest request;
    request.model_id = located(path, [&] { return render_template(m.model_id, lookup_in(frame)); });
    request.messages = context.messages;
    request.temperature = options_.temperature;
    request.max_tokens = options_.max_tokens;
    if (model_calls >= options_.limits.max_model_calls)
      throw Error(ErrorCode::LimitExceeded,
                  "model-call budget of " + std::to_string(options_.limits.max_model_calls) + " exhausted", path);
    ++model_calls;
    const ChatResponse response = located(path, [&] { return backend_.complete(request); });
    emit(m.role.value_or(Role::Assistant), response.text);
    Json value = response.text;
    if (m.parse_json || m.spec) value = located(path, [&] { return parse_model_output(response.text, m.spec); });
    if (m.def) frame.bindings[*m.def] = std::move(value);
    return response.text;
  }

  std::string run(const CodeBlock& c, Frame& frame, const std::string& path, std::optional<Role>) {
    const std::string source = located(path, [&] { return render_template(c.source, lookup_in(frame)); });
    Observation obs;
    if (c.runtime == CodeRuntime::Calc) {
      obs = tool_calc(source);
    } else {
      if (!options_.sandbox)
        throw Error(ErrorCode::SandboxUnavailable, "no sandbox runner configured for code blocks", path);
      obs = located(path, [&] { return tool_execute(source, *options_.sandbox, 10.0); });
    }
    ++tool_calls;
    emit(Role::Tool, obs.text);
    if (c.def) frame.bindings[*c.def] = obs.text;
    return obs.text;
  }

  std::string run(const IfBlock& b, Frame& frame, const std::string& path, std::optional<Role> inherited) {
    const bool taken = located(child(path, "if"), [&] { return evaluate_condition(b.condition, lookup_in(frame)); });
    if (taken) return exec(*b.then, frame, child(path, "then"), inherited);
    if (b.otherwise) return exec(**b.otherwise, frame, child(path, "else"), inherited);
    return {};
  }

  std::string run(const RepeatBlock& r, Frame& frame, const std::string& path, std::optional<Role> inherited) {
    std::string out;
    for (int i = 0; i < r.max_iterations; ++i) {
      out += exec(*r.body, frame, child(path, "repeat"), inherited);
      if (located(child(path, "until"), [&] { return evaluate_condition(r.until, lookup_in(frame)); })) break;
    }
    return out;
  }

  std::string run(const FunctionDef& f, Frame& frame, const std::string&, std::optional<Role>) {
    frame.functions[f.name] = Closure{&f, &frame};
    return {};
  }

  std::string run(const DataBlock& d, Frame& frame, const std::string&, std::optional<Role>) {
    if (d.def) frame.bindings[*d.def] = d.value;
    return {};
  }

  std::string run(const CallBlock& c, Frame& frame, const std::string& path, std::optional<Role>) {
    const Json args = located(child(path, "args"), [&] { return render_value(c.args, lookup_in(frame)); });
    CallOutcome outcome;
    if (auto closure = frame.function(c.function)) {
      outcome = call_function(*closure->def, closure->frame, args, path);
    } else if (auto builtin = call_builtin(c.function, args, path)) {
      outcome = std::move(*builtin);
    } else if (const FunctionDef* lib = library_function(c.function)) {
      outcome = call_function(*lib, nullptr, args, path);
    } else {
      throw Error(ErrorCode::UnboundFunction, "no function named '" + c.function + "'", path);
    }
    if (c.def) frame.bindings[*c.def] = std::move(outcome.value);
    return outcome.output;
  }

  CallOutcome call_function(const FunctionDef& f, Frame* defining, const Json& args, const std::string& path) {
    Frame local;
    local.parent = defining;
    for (const auto& [name, value] : args.items()) {
      const bool declared =
          std::any_of(f.params.begin(), f.params.end(), [&](const auto& p) { return p.first == name; });
      if (!declared) throw Error(ErrorCode::InvalidProgram, "'" + f.name + "' has no parameter '" + name + "'", path);
    }
    for (const auto& [name, spec] : f.params) {
      auto it = args.find(name);
      if (it == args.end() || it->is_null()) {
        local.bindings[name] = nullptr;
        continue;
      }
      const auto check = validate_value(*it, spec);
      if (!check.ok())
        throw Error(ErrorCode::InvalidProgram,
                    "argument '" + name + "' of '" + f.name + "' " + check.violations.front().path + ": " +
                        check.violations.front().message,
                    path);
      local.bindings[name] = *it;
    }
    CallOutcome out;
    out.output = exec(*f.body, local, child(path, "return"), std::nullopt);
    if (f.result) {
      out.value = located(child(path, "result"), [&] { return render_value(Json(*f.result), lookup_in(local)); });
    } else {
      out.value = out.output;
    }
    return out;
  }

  static Json action_json(const ParsedAction& parsed) {
    Json out = Json::object();
    if (const auto* call = std::get_if<ToolCall>(&parsed)) {
      out["kind"] = "call";
      out["action"] = call->action;
      out["arguments"] = call->arguments;
      out["answer"] = "";
    } else if (const auto* fin = std::get_if<FinishValue>(&parsed)) {
      out["kind"] = "finish";
      out["action"] = "Finish";
      out["answer"] = fin->answer;
    } else {
      out["kind"] = "error";
      out["observation"] = std::get<Observation>(parsed).text;
      out["answer"] = "";
    }
    return out;
  }

  static const Json& arg(const Json& args, const char* name, const std::string& path) {
    auto it = args.find(name);
    if (it == args.end()) throw Error(ErrorCode::InvalidProgram, std::string("missing argument '") + name + "'", path);
    return *it;
  }

  static std::string string_arg(const Json& args, const char* name, const std::string& path) {
    const Json& v = arg(args, name, path);
    return v.is_string() ? v.get<std::string>() : v.dump();
  }

  std::string observe(const std::string& text) {
    ++tool_calls;
    const std::string message = "Obs: " + text;
    emit(Role::Tool, message);
    return message;
  }

  Observation invoke(const ToolCall& call, const std::string& path) {
    return located(path, [&] { return tools_.invoke(call); });
  }

  std::optional<CallOutcome> call_builtin(const std::string& name, const Json& args, const std::string& path) {
    if (name == "parse_action") {
      return CallOutcome{action_json(parse_action(string_arg(args, "text", path), tools_)), {}};
    }
    if (name == "run_action") {
      const Json& action = arg(args, "action", path);
      std::string text;
      const std::string kind = action.is_object() ? action.value("kind", std::string()) : std::string();
      if (kind == "call") {
        text = invoke(ToolCall{action.value("action", std::string()), action.value("arguments", Json::object())}, path).text;
      } else if (kind == "error") {
        text = action.value("observation", std::string("Invalid action."));
      } else {
        return CallOutcome{nullptr, {}};
      }
      return CallOutcome{text, observe(text)};
    }
    if (name == "run_plan") {
      const std::string evidence = run_plan(string_arg(args, "plan", path), path);
      ++tool_calls;
      emit(Role::Tool, evidence);
      return CallOutcome{evidence, evidence};
    }
    if (name == "render_demonstrations") {
      const Json& demos = arg(args, "demonstrations", path);
      std::string out;
      if (demos.is_array()) {
        for (const auto& d : demos) out += (d.is_string() ? d.get<std::string>() : d.dump()) + "\n\n";
      } else if (!demos.is_null()) {
        throw Error(ErrorCode::InvalidProgram, "demonstrations must be a list", path);
      }
      return CallOutcome{out, {}};
    }
    if (const auto* tool = tools_.find(name); tool != nullptr && tool->run) {
      const std::string text = invoke(ToolCall{name, args}, path).text;
      return CallOutcome{text, observe(text)};
    }
    return std::nullopt;
  }

  // Executes every "Act:" line of a plan in order. "#Ek" inside arguments is
  // replaced by the k-th observation before the call.
  std::string run_plan(const std::string& plan, const std::string& path) {
    static const std::regex ref(R"(#E(\d+))");
    std::vector<std::string> evidence;
    std::istringstream lines(plan);
    for (std::string line; std::getline(lines, line);) {
      const auto start = line.find_first_not_of(" \t");
      if (start == std::string::npos || line.compare(start, 4, "Act:") != 0) continue;
      const ParsedAction parsed = parse_action(std::string_view(line).substr(start + 4), tools_);
      if (std::holds_alternative<FinishValue>(parsed)) continue;
      std::string text;
      if (const auto* call = std::get_if<ToolCall>(&parsed)) {
        ToolCall resolved = *call;
        for (auto& [key, value] : resolved.arguments.items()) {
          if (!value.is_string()) continue;
          const std::string s = value.get<std::string>();
          std::string replaced;
          auto last = s.cbegin();
          for (std::sregex_iterator it(s.begin(), s.end(), ref), end; it != end; ++it) {
            const std::size_t k = std::stoul((*it)[1].str());
            replaced.append(last, (*it)[0].first);
            replaced += (k >= 1 && k <= evidence.size()) ? evidence[k - 1] : (*it)[0].str();
            last = (*it)[0].second;
          }
          replaced.append(last, s.cend());
          value = replaced;
        }
        text = invoke(resolved, path).text;
      } else {
        text = std::get<Observation>(parsed).text;
      }
      evidence.push_back(text);
    }
    if (evidence.empty()) return "Evidence: the plan contained no actions.";
    std::string out;
    for (std::size_t i = 0; i < evidence.size(); ++i) {
      if (i > 0) out += "\n";
      out += "#E" + std::to_string(i + 1) + " = " + evidence[i];
    }
    return out;
  }

  Backend& backend_;
  const ToolRegistry& tools_;
  const ExecutionOptions& options_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

ExecutionResult execute_program(const Program& program, const Json& initial_scope, Backend& backend,
                                const ToolRegistry& tools, const ExecutionOptions& options) {
  if (!initial_scope.is_object()) throw Error(ErrorCode::InvalidArgument, "initial scope must be an object");
  if (options.limits.max_model_calls < 1 || options.limits.max_wall.count() <= 0)
    throw Error(ErrorCode::InvalidArgument, "limits must be positive");
  Interpreter interpreter(backend, tools, options);
  Frame top;
  top.bindings = initial_scope;
  ExecutionResult result;
  result.output = interpreter.exec(program.root, top, "", std::nullopt);
  result.context = std::move(interpreter.context);
  result.bindings = std::move(top.bindings);
  result.model_calls = interpreter.model_calls;
  result.tool_calls = interpreter.tool_calls;
  return result;
}

std::string program_answer(const ExecutionResult& result) {
  auto it = result.bindings.find("answer");
  if (it == result.bindings.end()) return result.output;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_null()) return {};
  return it->dump();
}

}  // namespace pdlopt
