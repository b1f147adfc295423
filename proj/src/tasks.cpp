#include "pdlopt/tasks.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "pdlopt/detail/rng.hpp"
#include "pdlopt/error.hpp"
#include "pdlopt/sandbox.hpp"
#include "pdlopt/search.hpp"

namespace pdlopt {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string scalar_text(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number()) return v.dump();
  return {};
}

void check_string_list(const Json& v, const std::string& what, const std::string& where) {
  if (!v.is_array() || !std::all_of(v.begin(), v.end(), [](const Json& x) { return x.is_string(); }))
    throw Error(ErrorCode::DatasetSchema, what + " must be a list of strings", where);
}

void check_task_fields(const TaskInstance& inst, TaskKind task, const std::string& where) {
  const Json& m = inst.metadata;
  switch (task) {
    case TaskKind::Gsm8k:
    case TaskKind::GsmHard:
      if (m.contains("steps")) check_string_list(m["steps"], "steps", where);
      break;
    case TaskKind::Fever:
      if (inst.answer != "true" && inst.answer != "false")
        throw Error(ErrorCode::DatasetSchema, "answer must be \"true\" or \"false\"", where);
      if (m.contains("evidence")) {
        const Json& ev = m["evidence"];
        if (!ev.is_array()) throw Error(ErrorCode::DatasetSchema, "evidence must be a list", where);
        for (const auto& a : ev) {
          if (!a.is_object() || !a.contains("title") || !a["title"].is_string())
            throw Error(ErrorCode::DatasetSchema, "evidence articles need a title", where);
          if (a.contains("summary") && !a["summary"].is_string())
            throw Error(ErrorCode::DatasetSchema, "evidence summary must be a string", where);
          if (a.contains("sentences")) check_string_list(a["sentences"], "evidence sentences", where);
        }
      }
      break;
    case TaskKind::Mbpp:
      if (m.contains("test") && !m["test"].is_string())
        throw Error(ErrorCode::DatasetSchema, "test must be a string", where);
      if (m.contains("hidden_tests")) check_string_list(m["hidden_tests"], "hidden_tests", where);
      break;
  }
}

const std::regex& number_pattern() {
  static const std::regex re(R"([-+]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?|[-+]?\.\d+)");
  return re;
}

}  // namespace

std::vector<TaskInstance> parse_dataset(std::string_view jsonl, TaskKind task, const std::string& source) {
  std::vector<TaskInstance> out;
  std::set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= jsonl.size()) {
    const auto nl = jsonl.find('\n', pos);
    const std::string_view line = jsonl.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? jsonl.size() + 1 : nl + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = (source.empty() ? "" : source + ":") + "line " + std::to_string(line_no);
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::DatasetSchema, "not a JSON object", where);
    TaskInstance inst;
    for (const char* key : {"id", "question", "answer"}) {
      if (!j.contains(key)) throw Error(ErrorCode::DatasetSchema, std::string("missing field '") + key + "'", where);
    }
    inst.id = scalar_text(j["id"]);
    inst.question = j["question"].is_string() ? j["question"].get<std::string>() : std::string();
    inst.answer = scalar_text(j["answer"]);
    if (inst.id.empty()) throw Error(ErrorCode::DatasetSchema, "id must be a nonempty string or number", where);
    if (inst.question.empty()) throw Error(ErrorCode::DatasetSchema, "question must be a nonempty string", where);
    if (inst.answer.empty()) throw Error(ErrorCode::DatasetSchema, "answer must be nonempty", where);
    if (task == TaskKind::Fever) inst.answer = lower(trim(inst.answer));
    for (auto& [k, v] : j.items())
      if (k != "id" && k != "question" && k != "answer") inst.metadata[k] = v;
    check_task_fields(inst, task, where);
    if (!ids.insert(inst.id).second) throw Error(ErrorCode::DatasetSchema, "duplicate id '" + inst.id + "'", where);
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<TaskInstance> load_dataset(const std::string& path, TaskKind task) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read dataset", path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_dataset(buffer.str(), task, path);
}

Splits make_splits(const std::vector<TaskInstance>& instances, SplitSizes sizes, std::uint64_t seed,
                   const std::optional<std::vector<TaskInstance>>& cross_train_bank) {
  const std::size_t own_train = cross_train_bank ? 0 : sizes.train;
  if (sizes.valid + sizes.test + own_train > instances.size())
    throw Error(ErrorCode::InsufficientData, "requested " + std::to_string(sizes.valid + sizes.test + own_train) +
                                                 " instances but the dataset has " + std::to_string(instances.size()));
  std::vector<TaskInstance> pool = instances;
  detail::shuffle(pool, seed);
  Splits s;
  auto take = [&pool](std::size_t from, std::size_t n) {
    return std::vector<TaskInstance>(pool.begin() + static_cast<std::ptrdiff_t>(from),
                                     pool.begin() + static_cast<std::ptrdiff_t>(from + n));
  };
  s.valid = take(0, sizes.valid);
  s.test = take(sizes.valid, sizes.test);
  if (!cross_train_bank) {
    s.train = take(sizes.valid + sizes.test, sizes.train);
    return s;
  }
  std::vector<TaskInstance> bank = *cross_train_bank;
  if (sizes.train > bank.size())
    throw Error(ErrorCode::InsufficientData, "requested " + std::to_string(sizes.train) +
                                                 " training instances but the bank has " + std::to_string(bank.size()));
  detail::shuffle(bank, seed ^ 0x9e3779b97f4a7c15ULL);
  if (sizes.train > 0) bank.resize(sizes.train);
  std::set<std::string> held_out;
  for (const auto& i : s.valid) held_out.insert(i.id);
  for (const auto& i : s.test) held_out.insert(i.id);
  for (const auto& i : bank)
    if (held_out.count(i.id))
      throw Error(ErrorCode::DatasetSchema, "bank id '" + i.id + "' also appears in validation or test data");
  s.train = std::move(bank);
  return s;
}

std::optional<std::string> normalize_number(std::string_view text) {
  std::string s;
  for (char c : trim(text))
    if (c != ',') s += c;
  if (!s.empty() && s.front() == '+') s.erase(0, 1);
  static const std::regex shape(R"(-?(\d+(\.\d*)?|\.\d+))");
  if (!std::regex_match(s, shape)) return std::nullopt;
  const bool negative = s.front() == '-';
  if (negative) s.erase(0, 1);
  if (const auto dot = s.find('.'); dot != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  const auto first = s.find_first_not_of('0');
  if (first == std::string::npos) s = "0";
  else if (s[first] == '.') s = "0" + s.substr(first);
  else s = s.substr(first);
  if (s == "0") return s;
  return negative ? "-" + s : s;
}

Verdict eval_gsm8k(std::string_view model_output, std::string_view truth) {
  const std::string text(model_output);
  const std::string folded = lower(text);
  std::size_t after = std::string::npos;
  for (std::string_view delim : {"the answer is", "####"}) {
    const auto p = folded.rfind(delim);
    if (p != std::string::npos && (after == std::string::npos || p + delim.size() > after)) after = p + delim.size();
  }
  std::optional<std::string> raw;
  if (after != std::string::npos) {
    std::smatch m;
    const std::string tail = text.substr(after);
    if (std::regex_search(tail, m, number_pattern())) raw = m.str();
  }
  if (!raw) {
    for (std::sregex_iterator it(text.begin(), text.end(), number_pattern()), end; it != end; ++it) raw = it->str();
  }
  if (!raw) return Verdict{false, std::nullopt};
  const auto got = normalize_number(*raw);
  const auto want = normalize_number(truth);
  const bool correct = got && (want ? *got == *want : *got == trim(truth));
  return Verdict{correct, got};
}

Verdict eval_fever(std::string_view model_output, std::string_view truth) {
  std::string last;
  std::istringstream lines{std::string(model_output)};
  for (std::string line; std::getline(lines, line);)
    if (!trim(line).empty()) last = lower(trim(line));
  static const std::regex t(R"(\btrue\b)");
  static const std::regex f(R"(\bfalse\b)");
  const bool has_true = std::regex_search(last, t);
  const bool has_false = std::regex_search(last, f);
  if (has_true == has_false) return Verdict{false, std::nullopt};
  const std::string got = has_true ? "true" : "false";
  return Verdict{got == lower(trim(truth)), got};
}

std::string extract_code(std::string_view model_output) {
  const std::string text(model_output);
  const auto open = text.rfind("<solution>");
  if (open != std::string::npos) {
    const auto start = open + 10;
    const auto close = text.find("</solution>", start);
    std::string body = text.substr(start, close == std::string::npos ? std::string::npos : close - start);
    if (!body.empty() && body.front() == '\n') body.erase(0, 1);
    if (!body.empty() && body.back() == '\n') body.pop_back();
    return body;
  }
  const auto fence_close = text.rfind("```");
  if (fence_close != std::string::npos && fence_close > 0) {
    const auto fence_open = text.rfind("```", fence_close - 1);
    if (fence_open != std::string::npos) {
      std::string body = text.substr(fence_open + 3, fence_close - fence_open - 3);
      const auto nl = body.find('\n');
      if (nl != std::string::npos && body.find_first_of(" \t(=") > nl) body.erase(0, nl + 1);
      if (!body.empty() && body.back() == '\n') body.pop_back();
      return body;
    }
  }
  return trim(text);
}

Verdict eval_mbpp(std::string_view solution_code, const std::vector<std::string>& hidden_tests, SandboxClient& sandbox,
                  double timeout_s) {
  if (hidden_tests.empty()) throw Error(ErrorCode::InvalidArgument, "eval_mbpp needs at least one test");
  SandboxRequest req;
  req.code = std::string(solution_code);
  req.timeout_s = timeout_s;
  req.mode = SandboxRequest::Mode::TestSuite;
  req.tests = hidden_tests;
  const SandboxResponse resp = sandbox.run(req);
  bool correct = resp.status == SandboxResponse::Status::Ok && resp.per_test &&
                 resp.per_test->size() == hidden_tests.size() &&
                 std::all_of(resp.per_test->begin(), resp.per_test->end(), [](bool b) { return b; });
  return Verdict{correct, std::string(solution_code)};
}

Verdict evaluate_answer(TaskKind task, std::string_view answer, const TaskInstance& instance, SandboxClient* sandbox) {
  switch (task) {
    case TaskKind::Gsm8k:
    case TaskKind::GsmHard:
      return eval_gsm8k(answer, instance.answer);
    case TaskKind::Fever:
      return eval_fever(answer, instance.answer);
    case TaskKind::Mbpp: {
      if (sandbox == nullptr) throw Error(ErrorCode::SandboxUnavailable, "mbpp evaluation needs a sandbox runner");
      std::vector<std::string> tests;
      if (auto it = instance.metadata.find("hidden_tests"); it != instance.metadata.end() && !it->empty())
        tests = it->get<std::vector<std::string>>();
      else if (auto t = instance.metadata.find("test"); t != instance.metadata.end())
        tests.push_back(t->get<std::string>());
      if (tests.empty()) throw Error(ErrorCode::DatasetSchema, "instance has no tests", instance.id);
      return eval_mbpp(extract_code(answer), tests, *sandbox);
    }
  }
  throw Error(ErrorCode::InvalidArgument, "unknown task");
}

std::string default_instruction(TaskKind task) {
  switch (task) {
    case TaskKind::Gsm8k:
    case TaskKind::GsmHard:
      return "Solve the math word problem. Reason step by step and finish with a line of the form "
             "\"The answer is <number>\".";
    case TaskKind::Fever:
      return "Decide whether the claim is true or false. Finish with a line of the form \"The claim is true\" or "
             "\"The claim is false\".";
    case TaskKind::Mbpp:
      return "Write a Python function that meets the specification and passes the example test. Run code inside "
             "<execute></execute> tags and give the final code inside <solution></solution> tags.";
  }
  return {};
}

bool reactive_only(TaskKind task) noexcept { return task == TaskKind::Mbpp; }

ToolRegistry make_task_registry(TaskKind task, std::shared_ptr<SearchClient> search,
                                std::shared_ptr<SandboxClient> sandbox) {
  switch (task) {
    case TaskKind::Gsm8k:
    case TaskKind::GsmHard: {
      ToolRegistry r(ActionFormat::Json);
      add_calc(r);
      return r;
    }
    case TaskKind::Fever: {
      ToolRegistry r(ActionFormat::Json);
      add_search(r, std::move(search));
      return r;
    }
    case TaskKind::Mbpp: {
      ToolRegistry r(ActionFormat::Xml);
      add_execute(r, std::move(sandbox));
      return r;
    }
  }
  throw Error(ErrorCode::InvalidArgument, "unknown task");
}

}  // namespace pdlopt
