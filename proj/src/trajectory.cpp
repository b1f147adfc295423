#include "pdlopt/trajectory.hpp"

#include <map>
#include <regex>

#include "pdlopt/error.hpp"
#include "pdlopt/sandbox.hpp"

namespace pdlopt {

namespace {

constexpr std::string_view kRunFirst = "I should run a solution on the test case before proposing a solution.";
constexpr std::string_view kNoMoreError = "There is no more AssertionError. I can now submit the solution.";

Step thought(std::string text) { return Step{step::Thought{std::move(text)}}; }
Step act(std::string action, Json args) { return Step{step::Action{ToolCall{std::move(action), std::move(args)}}}; }
Step observe(std::string text) { return Step{step::Observation{std::move(text)}}; }
Step finish(std::string value) { return Step{step::Finish{std::move(value)}}; }

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

struct Annotation {
  std::string leading;
  std::string expr;
  std::string result;
};

std::vector<Annotation> annotations(const TaskInstance& instance) {
  static const std::regex annotation(R"(<<([^=<>]*)=([^<>]*)>>)");
  std::vector<Annotation> out;
  auto it = instance.metadata.find("steps");
  if (it == instance.metadata.end() || !it->is_array()) return out;
  for (const auto& s : *it) {
    if (!s.is_string()) continue;
    const std::string text = s.get<std::string>();
    auto last = text.cbegin();
    for (std::sregex_iterator m(text.begin(), text.end(), annotation), end; m != end; ++m) {
      out.push_back({trim(std::string((last), (*m)[0].first)), trim((*m)[1].str()), trim((*m)[2].str())});
      last = (*m)[0].second;
      // Skip the result that conventionally repeats right after the annotation.
      const std::string& result = out.back().result;
      if (static_cast<std::size_t>(text.cend() - last) >= result.size() &&
          std::string_view(&*last, result.size()) == result)
        last += static_cast<std::ptrdiff_t>(result.size());
    }
  }
  return out;
}

std::string with_prefix(const std::string& leading, const std::string& sentence) {
  return leading.empty() ? sentence : leading + " " + sentence;
}

// Replaces number tokens equal to an earlier result with that step's #Ek.
std::string substitute_results(const std::string& expr, const std::map<std::string, std::size_t>& results) {
  static const std::regex number(R"((\d+(?:\.\d+)?))");
  std::string out;
  auto last = expr.cbegin();
  for (std::sregex_iterator m(expr.begin(), expr.end(), number), end; m != end; ++m) {
    out.append(last, (*m)[0].first);
    const bool glued = (*m)[0].first != expr.cbegin() && std::isalnum(static_cast<unsigned char>(*((*m)[0].first - 1)));
    auto hit = results.find((*m)[0].str());
    out += (hit != results.end() && !glued) ? "#E" + std::to_string(hit->second) : (*m)[0].str();
    last = (*m)[0].second;
  }
  out.append(last, expr.cend());
  return out;
}

std::string normalized_result(const std::string& r) {
  std::string s;
  for (char c : r)
    if (c != ',' && c != '$') s += c;
  if (const auto dot = s.find('.'); dot != std::string::npos) {
    while (!s.empty() && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
  }
  return s;
}

std::string python_string_body(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '\\' || c == '"') out += '\\';
    out += c;
  }
  return out;
}

// `assert f(x) == y` becomes a `res = ...` line plus an assertion reporting
// the actual value. Other shapes are used unchanged.
std::string checked_test(const std::string& test) {
  std::string body = trim(test);
  if (body.rfind("assert", 0) != 0) return body;
  body = trim(std::string_view(body).substr(6));
  int depth = 0;
  char quote = 0;
  for (std::size_t i = 0; i + 1 < body.size(); ++i) {
    const char c = body[i];
    if (quote) {
      if (c == '\\') ++i;
      else if (c == quote) quote = 0;
      continue;
    }
    if (c == '"' || c == '\'') quote = c;
    else if (c == '(' || c == '[' || c == '{') ++depth;
    else if (c == ')' || c == ']' || c == '}') --depth;
    else if (depth == 0 && c == '=' && body[i + 1] == '=') {
      const std::string lhs = trim(std::string_view(body).substr(0, i));
      const std::string rhs = trim(std::string_view(body).substr(i + 2));
      if (lhs.empty() || rhs.empty()) break;
      return "res = " + lhs + "\nassert res == " + rhs + ", \"Expected " + python_string_body(rhs) +
             " but got {}\".format(res)";
    }
  }
  return trim(test);
}

std::string string_field(const Json& obj, const char* key) {
  auto it = obj.find(key);
  return it != obj.end() && it->is_string() ? it->get<std::string>() : std::string();
}

Trajectory refinement(std::string question, std::string wrong, std::string test_block, std::string traceback,
                      std::string fix_thought, std::string right) {
  Trajectory t;
  t.question = std::move(question);
  t.kind = PatternKind::ReAct;
  t.task = TaskKind::Mbpp;
  t.steps = {
      thought(std::string(kRunFirst)),
      act("Execute", Json{{"code", wrong + "\n" + test_block}}),
      observe(std::move(traceback)),
      thought(std::move(fix_thought)),
      act("Execute", Json{{"code", right + "\n" + test_block}}),
      observe(std::string(kExecutedNoOutput)),
      thought(std::string(kNoMoreError)),
      finish(right),
  };
  return t;
}

}  // namespace

void check_trajectory(const Trajectory& t) {
  if (t.steps.empty()) throw Error(ErrorCode::InvalidArgument, "trajectory has no steps");
  if (t.kind != PatternKind::ReAct && t.kind != PatternKind::ReWOO)
    throw Error(ErrorCode::InvalidArgument, "trajectories are ReAct or ReWOO");
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    const auto& v = t.steps[i].value;
    const std::string where = "steps[" + std::to_string(i) + "]";
    if (std::holds_alternative<step::Observation>(v)) {
      if (t.kind == PatternKind::ReWOO) throw Error(ErrorCode::InvalidArgument, "ReWOO has no observations", where);
      if (i == 0 || !std::holds_alternative<step::Action>(t.steps[i - 1].value))
        throw Error(ErrorCode::InvalidArgument, "observation must follow an action", where);
    }
    if (std::holds_alternative<step::Finish>(v)) {
      if (t.kind == PatternKind::ReWOO) throw Error(ErrorCode::InvalidArgument, "ReWOO has no finish", where);
      if (i + 1 != t.steps.size()) throw Error(ErrorCode::InvalidArgument, "finish must be the last step", where);
    }
  }
  if (t.kind == PatternKind::ReAct && !std::holds_alternative<step::Finish>(t.steps.back().value))
    throw Error(ErrorCode::InvalidArgument, "ReAct trajectory must end with finish");
}

Trajectory build_gsm8k_trajectory(const TaskInstance& instance, PatternKind kind) {
  if (kind != PatternKind::ReAct && kind != PatternKind::ReWOO)
    throw Error(ErrorCode::InvalidArgument, "trajectories are ReAct or ReWOO");
  const auto found = annotations(instance);
  if (found.empty()) throw Error(ErrorCode::NoExpressions, "no <<expr=result>> annotation", instance.id);

  Trajectory t;
  t.question = instance.question;
  t.kind = kind;
  t.task = TaskKind::Gsm8k;
  std::map<std::string, std::size_t> results;
  for (std::size_t i = 0; i < found.size(); ++i) {
    const auto& a = found[i];
    if (kind == PatternKind::ReAct) {
      t.steps.push_back(thought(with_prefix(a.leading, "I need to calculate " + a.expr)));
      t.steps.push_back(act("Calc", Json{{"expr", a.expr}}));
      t.steps.push_back(observe(a.result));
    } else {
      const std::string expr = substitute_results(a.expr, results);
      t.steps.push_back(thought(with_prefix(a.leading, "Calculate " + expr)));
      t.steps.push_back(act("Calc", Json{{"expr", expr}}));
      results[normalized_result(a.result)] = i + 1;
    }
  }
  if (kind == PatternKind::ReAct) {
    t.steps.push_back(thought("The answer is " + instance.answer));
    t.steps.push_back(finish(instance.answer));
  }
  return t;
}

Trajectory build_fever_trajectory(const TaskInstance& instance, PatternKind kind) {
  if (kind != PatternKind::ReAct && kind != PatternKind::ReWOO)
    throw Error(ErrorCode::InvalidArgument, "trajectories are ReAct or ReWOO");
  auto it = instance.metadata.find("evidence");
  if (it == instance.metadata.end() || !it->is_array() || it->empty())
    throw Error(ErrorCode::NoEvidence, "no evidence articles", instance.id);
  Trajectory t;
  t.question = instance.question;
  t.kind = kind;
  t.task = TaskKind::Fever;
  for (const auto& article : *it) {
    const std::string title = string_field(article, "title");
    t.steps.push_back(thought("I need to search for " + title));
    t.steps.push_back(act("Search", Json{{"query", title}}));
    if (kind == PatternKind::ReWOO) continue;
    t.steps.push_back(observe(string_field(article, "summary")));
    std::string sentences;
    for (const auto& s : article.value("sentences", Json::array())) {
      if (!s.is_string()) continue;
      if (!sentences.empty()) sentences += " ";
      sentences += s.get<std::string>();
    }
    if (!sentences.empty()) t.steps.push_back(thought(sentences));
  }
  if (kind == PatternKind::ReAct) {
    t.steps.push_back(thought("The claim is " + instance.answer));
    t.steps.push_back(finish(instance.answer));
  }
  return t;
}

QAPair build_fever_qa(const TaskInstance& instance) {
  auto it = instance.metadata.find("evidence");
  if (it == instance.metadata.end() || !it->is_array() || it->empty())
    throw Error(ErrorCode::NoEvidence, "no evidence articles", instance.id);
  std::string reasoning;
  for (const auto& article : *it) {
    for (const auto& s : article.value("sentences", Json::array())) {
      if (!s.is_string()) continue;
      if (!reasoning.empty()) reasoning += " ";
      reasoning += s.get<std::string>();
    }
  }
  return QAPair{instance.question, reasoning.empty() ? std::nullopt : std::optional(reasoning), instance.answer};
}

Trajectory build_mbpp_trajectory(const TaskInstance& instance) {
  const std::string test = string_field(instance.metadata, "test");
  if (trim(test).empty()) throw Error(ErrorCode::MissingTestCase, "no prompt test case", instance.id);
  Trajectory t;
  t.question = instance.question;
  t.kind = PatternKind::ReAct;
  t.task = TaskKind::Mbpp;
  t.steps = {
      thought(std::string(kRunFirst)),
      act("Execute", Json{{"code", instance.answer + "\n" + checked_test(test)}}),
      observe(std::string(kExecutedNoOutput)),
      thought(std::string(kNoMoreError)),
      finish(instance.answer),
  };
  return t;
}

const std::vector<Trajectory>& refinement_examples() {
  static const std::vector<Trajectory> examples = {
      refinement(
          "Write a function to find the largest number in a list.\nassert largest([3, 9, 1]) == 9",
          "def largest(xs):\n    best = xs[0]\n    for x in xs:\n        if x < best:\n            best = x\n"
          "    return best",
          checked_test("assert largest([3, 9, 1]) == 9"),
          "Traceback (most recent call last):\n  File \"<string>\", line 8, in <module>\n"
          "AssertionError: Expected 9 but got 1",
          "The comparison is reversed, so the function returns the smallest number. I should keep x when it is "
          "greater than best.",
          "def largest(xs):\n    best = xs[0]\n    for x in xs:\n        if x > best:\n            best = x\n"
          "    return best"),
      refinement("Write a python function to count the vowels in a string.\nassert count_vowels(\"Apple\") == 2",
                 "def count_vowels(s):\n    return sum(1 for c in s if c in \"aeiou\")",
                 checked_test("assert count_vowels(\"Apple\") == 2"),
                 "Traceback (most recent call last):\n  File \"<string>\", line 4, in <module>\n"
                 "AssertionError: Expected 2 but got 1",
                 "Uppercase vowels are not counted. I should lowercase the string before checking each character.",
                 "def count_vowels(s):\n    return sum(1 for c in s.lower() if c in \"aeiou\")"),
  };
  return examples;
}

QAPair build_gsm8k_qa(const TaskInstance& instance) {
  static const std::regex annotation(R"(<<[^<>]*>>)");
  std::string reasoning;
  auto it = instance.metadata.find("steps");
  if (it != instance.metadata.end() && it->is_array()) {
    for (const auto& s : *it) {
      if (!s.is_string()) continue;
      const std::string clean = trim(std::regex_replace(s.get<std::string>(), annotation, ""));
      if (clean.empty()) continue;
      if (!reasoning.empty()) reasoning += " ";
      reasoning += clean;
    }
  }
  return QAPair{instance.question, reasoning.empty() ? std::nullopt : std::optional(reasoning), instance.answer};
}

Demonstration build_demonstration(const TaskInstance& instance, TaskKind task, PatternKind kind) {
  switch (kind) {
    case PatternKind::ZeroShot:
      throw Error(ErrorCode::InvalidArgument, "zero_shot takes no demonstrations");
    case PatternKind::CoT:
      if (task == TaskKind::Fever) return {build_fever_qa(instance)};
      if (task == TaskKind::Mbpp) return {QAPair{instance.question, std::nullopt, instance.answer}};
      return {build_gsm8k_qa(instance)};
    case PatternKind::ReWOO:
    case PatternKind::ReAct:
      if (task == TaskKind::Fever) return {build_fever_trajectory(instance, kind)};
      if (task == TaskKind::Mbpp) {
        if (kind == PatternKind::ReWOO)
          throw Error(ErrorCode::ReWOOUnsupported, "rewoo cannot be used for a reactive-only task");
        return {build_mbpp_trajectory(instance)};
      }
      {
        Trajectory t = build_gsm8k_trajectory(instance, kind);
        t.task = task;
        return {std::move(t)};
      }
  }
  throw Error(ErrorCode::InvalidArgument, "unknown pattern kind");
}

ActionFormat action_format(TaskKind task) noexcept {
  return task == TaskKind::Mbpp ? ActionFormat::Xml : ActionFormat::Json;
}

Json trajectory_to_json(const Trajectory& t) {
  Json steps = Json::array();
  for (const auto& s : t.steps) {
    if (const auto* th = std::get_if<step::Thought>(&s.value)) {
      steps.push_back(Json{{"type", "thought"}, {"text", th->text}});
    } else if (const auto* a = std::get_if<step::Action>(&s.value)) {
      steps.push_back(Json{{"type", "action"}, {"action", a->call.action}, {"arguments", a->call.arguments}});
    } else if (const auto* o = std::get_if<step::Observation>(&s.value)) {
      steps.push_back(Json{{"type", "observation"}, {"text", o->text}});
    } else {
      steps.push_back(Json{{"type", "finish"}, {"value", std::get<step::Finish>(s.value).value}});
    }
  }
  return Json{{"task", to_string(t.task)}, {"kind", to_string(t.kind)}, {"question", t.question}, {"steps", steps}};
}

Trajectory trajectory_from_json(const Json& json) {
  auto fail = [](const std::string& msg, const std::string& path) {
    throw Error(ErrorCode::InvalidArgument, msg, path);
  };
  if (!json.is_object()) fail("trajectory must be an object", "");
  Trajectory t;
  const auto task = parse_task_kind(json.value("task", std::string()));
  const auto kind = parse_pattern_kind(json.value("kind", std::string()));
  if (!task) fail("unknown task", ".task");
  if (!kind) fail("unknown kind", ".kind");
  t.task = *task;
  t.kind = *kind;
  t.question = json.value("question", std::string());
  const Json steps = json.value("steps", Json::array());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const Json& s = steps[i];
    const std::string where = ".steps[" + std::to_string(i) + "]";
    const std::string type = s.is_object() ? s.value("type", std::string()) : std::string();
    if (type == "thought") t.steps.push_back(thought(s.value("text", std::string())));
    else if (type == "action") t.steps.push_back(act(s.value("action", std::string()), s.value("arguments", Json::object())));
    else if (type == "observation") t.steps.push_back(observe(s.value("text", std::string())));
    else if (type == "finish") t.steps.push_back(finish(s.value("value", std::string())));
    else fail("unknown step type '" + type + "'", where);
  }
  return t;
}

}  // namespace pdlopt
