#include "pdlopt/patterns.hpp"

#include <fstream>
#include <sstream>

#include "pdlopt/error.hpp"
#include "pdlopt/template.hpp"

namespace pdlopt {

namespace {

constexpr std::string_view kDemosCall = R"(
  - def: demos_text
    call: render_demonstrations
    args: {demonstrations: "${ demonstrations }"})";

constexpr std::string_view kZeroShot = R"(def: zero_shot
function:
  question: {type: string}
  instruction: {type: string}
  model: {type: string}
return:
  text:
  - "${ instruction }\n\nQ: ${ question }\nA: "
  - def: answer
    model: ${ model }
result: ${ answer }
)";

constexpr std::string_view kCoTHead = R"(def: cot
function:
  question: {type: string}
  instruction: {type: string}
  demonstrations: {type: array, items: {type: string}}
  model: {type: string}
return:
  text:)";

constexpr std::string_view kCoTTail = R"(
  - "${ instruction }\n\n${ demos_text }Q: ${ question }\nA: "
  - def: answer
    model: ${ model }
result: ${ answer }
)";

constexpr std::string_view kReWOOHead = R"(def: rewoo
function:
  question: {type: string}
  instruction: {type: string}
  demonstrations: {type: array, items: {type: string}}
  model: {type: string}
  tools: {type: array}
return:
  text:)";

constexpr std::string_view kReWOOTail = R"(
  - "${ instruction }\nTools: ${ tools }\nPlan first: write one Tho: line, then one Act: line per action. Refer to the result of the k-th action as #Ek.\n\n${ demos_text }Question: ${ question }\n"
  - def: plan
    model: ${ model }
  - def: evidence
    call: run_plan
    args: {plan: "${ plan }"}
  - "Now answer the question using the evidence above.\nQuestion: ${ question }\n"
  - def: answer
    model: ${ model }
result: ${ answer }
)";

constexpr std::string_view kReActHead = R"(def: react
function:
  question: {type: string}
  instruction: {type: string}
  demonstrations: {type: array, items: {type: string}}
  model: {type: string}
  tools: {type: array}
  system: {type: string}
return:
  text:
  - if: ${ system }
    then:
      role: system
      text: ${ system })";

constexpr std::string_view kReActTail = R"(
  - "${ instruction }\nTools: ${ tools }\n\n${ demos_text }Question: ${ question }\n"
  - repeat:
      text:
      - def: step
        model: ${ model }
      - def: action
        call: parse_action
        args: {text: "${ step }"}
      - if: ${ action.kind != "finish" }
        then:
          call: run_action
          args: {action: "${ action }"}
    max_iterations: @LIMIT@
    until: ${ action.kind == "finish" }
result: ${ action.answer }
)";

std::string pattern_source(PatternKind kind, int loop_limit) {
  switch (kind) {
    case PatternKind::ZeroShot:
      return std::string(kZeroShot);
    case PatternKind::CoT:
      return std::string(kCoTHead) + std::string(kDemosCall) + std::string(kCoTTail);
    case PatternKind::ReWOO:
      return std::string(kReWOOHead) + std::string(kDemosCall) + std::string(kReWOOTail);
    case PatternKind::ReAct: {
      std::string tail(kReActTail);
      tail.replace(tail.find("@LIMIT@"), 7, std::to_string(loop_limit));
      return std::string(kReActHead) + std::string(kDemosCall) + tail;
    }
  }
  throw Error(ErrorCode::InvalidArgument, "unknown pattern kind");
}

constexpr std::string_view kGraniteTools =
    "You are a helpful assistant with access to the following tools. When a tool is required to answer the "
    "user's query, respond with a JSON object of the form {\"action\": <tool name>, \"arguments\": "
    "<arguments object>}.\n\nAvailable tools:\n${ tools }\n\nOn every turn write one line starting with "
    "\"Tho:\" that explains your reasoning, then one line starting with \"Act:\" that holds exactly one "
    "action. When you know the answer, use the Finish action.";

constexpr std::string_view kLlama3 =
    "Environment: tools\nYou have access to the functions below. To call a function, reply with a single "
    "JSON object {\"action\": \"function name\", \"arguments\": {\"argument name\": value}} on its own "
    "line.\n\n${ tools }\n\nThink step by step on a line starting with \"Tho:\", then give the call on a "
    "line starting with \"Act:\". Call Finish with the final answer to stop.";

constexpr std::string_view kGraniteLlama =
    "You are a helpful assistant that solves tasks by calling tools. Tools:\n${ tools }\n\nReply in two "
    "lines. First \"Tho: <reasoning>\". Then \"Act: {\"action\": \"<tool name>\", \"arguments\": "
    "{...}}\" with compact JSON and no other text. Use {\"action\": \"Finish\", \"arguments\": "
    "{\"answer\": <answer>}} once the answer is known.";

int loop_limit_for(const PatternOptions& options) {
  return options.format == ActionFormat::Xml ? options.limits.max_execute_attempts
                                             : options.limits.max_tao_iterations;
}

}  // namespace

const SystemPrompts& SystemPrompts::defaults() {
  static const SystemPrompts prompts{{
      {SystemPromptStyle::GraniteTools, std::string(kGraniteTools)},
      {SystemPromptStyle::Llama3, std::string(kLlama3)},
      {SystemPromptStyle::GraniteLlama, std::string(kGraniteLlama)},
  }};
  return prompts;
}

SystemPrompts SystemPrompts::load(const std::string& dir) {
  SystemPrompts out = defaults();
  for (auto& [style, text] : out.texts) {
    const std::string path = dir + "/" + std::string(to_string(style)) + ".txt";
    std::ifstream in(path, std::ios::binary);
    if (!in) continue;
    std::ostringstream buffer;
    buffer << in.rdbuf();
    text = buffer.str();
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    check_template(text);
  }
  return out;
}

FunctionDef pattern_function(PatternKind kind, int loop_limit) {
  if (loop_limit < 1) throw Error(ErrorCode::InvalidArgument, "loop limit must be positive");
  Program p = parse_program(pattern_source(kind, loop_limit));
  return std::get<FunctionDef>(p.root.node);
}

const std::vector<FunctionDef>& pattern_library() {
  static const std::vector<FunctionDef> library = [] {
    const PatternLimits limits;
    std::vector<FunctionDef> out;
    for (auto kind : {PatternKind::ZeroShot, PatternKind::CoT, PatternKind::ReWOO, PatternKind::ReAct})
      out.push_back(pattern_function(kind, limits.max_tao_iterations));
    return out;
  }();
  return library;
}

const FunctionDef* library_function(std::string_view name) {
  for (const auto& f : pattern_library())
    if (f.name == name) return &f;
  return nullptr;
}

Program pattern_library_program() {
  TextBlock t;
  for (const auto& f : pattern_library()) t.items.push_back(text_item(Block(f)));
  return Program{std::move(t)};
}

Json tool_specs_json(const std::vector<ToolSpec>& tools) {
  Json out = Json::array();
  for (const auto& t : tools)
    out.push_back(Json{{"name", t.name}, {"description", t.description}, {"parameters", type_spec_to_json(t.schema)}});
  return out;
}

std::string render_demonstration(const Demonstration& demo) {
  if (const auto* qa = std::get_if<QAPair>(&demo.value)) {
    if (qa->reasoning) return "Q: " + qa->question + "\nA: " + *qa->reasoning + "\nThe answer is " + qa->answer;
    return "Q: " + qa->question + "\nA: The answer is " + qa->answer;
  }
  const auto& traj = std::get<Trajectory>(demo.value);
  const ActionFormat format = action_format(traj.task);
  std::string out = "Question: " + traj.question;
  for (const auto& s : traj.steps) {
    out += "\n";
    if (const auto* t = std::get_if<step::Thought>(&s.value)) {
      out += "Tho: " + t->text;
    } else if (const auto* a = std::get_if<step::Action>(&s.value)) {
      out += "Act: " + render_action(a->call, format);
    } else if (const auto* o = std::get_if<step::Observation>(&s.value)) {
      out += "Obs: " + o->text;
    } else {
      out += "Act: " + render_finish(std::get<step::Finish>(s.value).value, format);
    }
  }
  return out;
}

void check_demos(PatternKind kind, const std::vector<Demonstration>& demos) {
  for (std::size_t i = 0; i < demos.size(); ++i) {
    const auto& d = demos[i];
    const std::string where = "demonstrations[" + std::to_string(i) + "]";
    switch (kind) {
      case PatternKind::ZeroShot:
        throw Error(ErrorCode::PatternDemoMismatch, "zero_shot takes no demonstrations", where);
      case PatternKind::CoT:
        if (!std::holds_alternative<QAPair>(d.value))
          throw Error(ErrorCode::PatternDemoMismatch, "cot needs question/answer demonstrations", where);
        break;
      case PatternKind::ReWOO:
      case PatternKind::ReAct: {
        const auto* traj = std::get_if<Trajectory>(&d.value);
        if (traj == nullptr || traj->kind != kind)
          throw Error(ErrorCode::PatternDemoMismatch,
                      std::string(to_string(kind)) + " needs " + std::string(to_string(kind)) + " trajectories",
                      where);
        break;
      }
    }
  }
}

std::string render_demonstrations(const std::vector<Demonstration>& demos, PatternKind kind) {
  check_demos(kind, demos);
  std::string out;
  for (std::size_t i = 0; i < demos.size(); ++i) {
    if (i > 0) out += "\n\n";
    out += render_demonstration(demos[i]);
  }
  return out;
}

Program pattern_program(const PatternOptions& options, bool inline_function) {
  PatternKind kind = options.kind;
  if (kind == PatternKind::CoT && options.demos.empty()) kind = PatternKind::ZeroShot;
  if (kind == PatternKind::ReWOO && options.reactive_only)
    throw Error(ErrorCode::ReWOOUnsupported, "rewoo cannot be used for a reactive-only task");
  check_demos(kind, options.demos);

  const int limit = loop_limit_for(options);
  const bool uses_tools = kind == PatternKind::ReAct || kind == PatternKind::ReWOO;
  const std::string name(to_string(kind));

  Json items = Json::array();
  Json args = Json::object();
  args["question"] = "${ question }";
  auto bind = [&](const std::string& var, Json value) {
    items.push_back(Json{{"def", var}, {"data", std::move(value)}});
    args[var] = "${ " + var + " }";
  };
  if (kind != PatternKind::ZeroShot) {
    Json rendered = Json::array();
    for (const auto& d : options.demos) rendered.push_back(render_demonstration(d));
    bind("demonstrations", std::move(rendered));
  }
  bind("instruction", options.instruction);
  if (uses_tools) bind("tools", tool_specs_json(options.tools));
  if (kind == PatternKind::ReAct && options.style) {
    const SystemPrompts& prompts = options.system_prompts ? *options.system_prompts : SystemPrompts::defaults();
    Json scope = {{"tools", tool_specs_json(options.tools)}};
    bind("system", render_template(prompts.texts.at(*options.style), scope));
  }
  args["model"] = options.model;

  if (inline_function || (kind == PatternKind::ReAct && limit != PatternLimits{}.max_tao_iterations))
    items.push_back(block_to_json(Block(pattern_function(kind, limit))));
  items.push_back(Json{{"def", "answer"}, {"call", name}, {"args", std::move(args)}});
  return program_from_json(Json{{"text", std::move(items)}});
}

Program instantiate_pattern(const PatternOptions& options) { return pattern_program(options, true); }

}  // namespace pdlopt
