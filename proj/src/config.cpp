#include "pdlopt/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "pdlopt/error.hpp"
#include "pdlopt/yaml.hpp"

namespace pdlopt {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& message) {
  throw Error(ErrorCode::Config, message, path);
}

void only_keys(const Json& node, const std::string& path, std::initializer_list<std::string_view> keys) {
  if (!node.is_object()) fail(path.empty() ? "(root)" : path, "must be a mapping");
  for (const auto& [key, _] : node.items()) {
    bool known = false;
    for (auto k : keys) known = known || k == key;
    if (!known) fail(path.empty() ? key : path + "." + key, "unknown field");
  }
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

class Reader {
 public:
  Reader(const Json& node, std::string path) : node_(node), path_(std::move(path)) {}

  bool has(const char* key) const { return node_.contains(key) && !node_.at(key).is_null(); }
  std::string where(const char* key) const { return join(path_, key); }
  const Json& at(const char* key) const { return node_.at(key); }

  std::string string(const char* key) const {
    if (!node_.at(key).is_string()) fail(where(key), "must be a string");
    return node_.at(key).get<std::string>();
  }

  std::uint64_t unsigned_int(const char* key, std::uint64_t min = 0) const {
    const Json& v = node_.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      fail(where(key), "must be a non-negative integer");
    const auto x = v.get<std::uint64_t>();
    if (x < min) fail(where(key), "must be at least " + std::to_string(min));
    return x;
  }

  double positive_number(const char* key) const {
    const Json& v = node_.at(key);
    if (!v.is_number() || v.get<double>() <= 0) fail(where(key), "must be a positive number");
    return v.get<double>();
  }

  std::vector<std::string> strings(const char* key) const {
    const Json& v = node_.at(key);
    if (v.is_string()) return {v.get<std::string>()};
    if (!v.is_array()) fail(where(key), "must be a list of strings");
    std::vector<std::string> out;
    for (const auto& x : v) {
      if (!x.is_string()) fail(where(key), "must be a list of strings");
      out.push_back(x.get<std::string>());
    }
    return out;
  }

 private:
  const Json& node_;
  std::string path_;
};

std::string resolve(const std::string& base_dir, const std::string& p) {
  const std::filesystem::path path(p);
  if (path.is_absolute()) return p;
  return (std::filesystem::path(base_dir) / path).lexically_normal().string();
}

SearchSpace parse_space(const Json& node, TaskKind task) {
  SearchSpace space = default_search_space(task);
  only_keys(node, "search_space", {"patterns", "num_demonstrations", "system_prompts", "instructions"});
  Reader r(node, "search_space");
  if (r.has("patterns")) {
    space.patterns.clear();
    for (const auto& name : r.strings("patterns")) {
      auto kind = parse_pattern_kind(name);
      if (!kind) fail(r.where("patterns"), "unknown pattern '" + name + "' (zero_shot, cot, rewoo, react)");
      space.patterns.push_back(*kind);
    }
  }
  if (r.has("num_demonstrations")) {
    space.num_demonstrations.clear();
    const Json& v = r.at("num_demonstrations");
    if (!v.is_array()) fail(r.where("num_demonstrations"), "must be a list of non-negative integers");
    for (const auto& x : v) {
      if (!x.is_number_integer() || x.get<std::int64_t>() < 0)
        fail(r.where("num_demonstrations"), "must be a list of non-negative integers");
      space.num_demonstrations.push_back(static_cast<int>(x.get<std::int64_t>()));
    }
  }
  if (r.has("system_prompts")) {
    space.system_prompts.clear();
    for (const auto& name : r.strings("system_prompts")) {
      auto style = parse_system_prompt_style(name);
      if (!style) fail(r.where("system_prompts"), "unknown style '" + name + "' (granite_tools, llama3, granite_llama)");
      space.system_prompts.push_back(*style);
    }
  }
  if (r.has("instructions")) space.instructions = r.strings("instructions");
  try {
    validate(space);
  } catch (const Error& e) {
    fail(join("search_space", e.path()), e.message());
  }
  return space;
}

}  // namespace

SearchSpace default_search_space(TaskKind task) {
  SearchSpace s;
  s.reactive_only = reactive_only(task);
  s.json_tools = action_format(task) == ActionFormat::Json;
  s.patterns = {PatternKind::ZeroShot, PatternKind::CoT};
  if (!s.reactive_only) s.patterns.push_back(PatternKind::ReWOO);
  s.patterns.push_back(PatternKind::ReAct);
  s.num_demonstrations = {0, 3, 5};
  s.system_prompts = {SystemPromptStyle::GraniteTools, SystemPromptStyle::Llama3, SystemPromptStyle::GraniteLlama};
  s.instructions = {default_instruction(task)};
  return s;
}

RunConfig parse_run_config(const Json& doc, const std::string& base_dir) {
  only_keys(doc, "",
            {"task", "dataset", "train_bank", "splits", "search_space", "k", "v_min", "v_max", "seed", "parallelism",
             "limits", "backend", "search", "sandbox", "system_prompts_dir", "output_dir"});
  Reader r(doc, "");
  RunConfig c;
  if (!r.has("task")) fail("task", "required");
  const auto task = parse_task_kind(r.string("task"));
  if (!task) fail("task", "unknown task (gsm8k, gsm_hard, fever, mbpp)");
  c.task = *task;
  if (!r.has("dataset")) fail("dataset", "required");
  c.dataset = resolve(base_dir, r.string("dataset"));
  if (r.has("train_bank")) c.train_bank = resolve(base_dir, r.string("train_bank"));

  if (!r.has("splits")) fail("splits", "required");
  only_keys(r.at("splits"), "splits", {"train", "valid", "test"});
  Reader s(r.at("splits"), "splits");
  if (!s.has("valid")) fail("splits.valid", "required");
  c.splits.valid = s.unsigned_int("valid", 1);
  if (s.has("train")) c.splits.train = s.unsigned_int("train");
  if (s.has("test")) c.splits.test = s.unsigned_int("test");

  c.space = r.has("search_space") ? parse_space(r.at("search_space"), c.task) : default_search_space(c.task);
  if (r.has("k")) c.k = r.unsigned_int("k", 1);
  if (r.has("v_min")) c.v_min = r.unsigned_int("v_min", 1);
  if (r.has("v_max")) c.v_max = r.unsigned_int("v_max", 1);
  if (r.has("seed")) c.seed = r.unsigned_int("seed");
  if (r.has("parallelism")) c.parallelism = r.unsigned_int("parallelism", 1);
  if (c.v_max && *c.v_max < c.v_min) fail("v_max", "must be at least v_min");
  if (c.v_min > c.splits.valid)
    fail("v_min", "v_min (" + std::to_string(c.v_min) + ") exceeds the validation split size (" +
                      std::to_string(c.splits.valid) + ")");
  if (c.v_max && *c.v_max > c.splits.valid)
    fail("v_max", "v_max (" + std::to_string(*c.v_max) + ") exceeds the validation split size (" +
                      std::to_string(c.splits.valid) + ")");

  if (r.has("limits")) {
    only_keys(r.at("limits"), "limits",
              {"max_tao_iterations", "max_execute_attempts", "max_model_calls", "max_wall_seconds", "max_tokens"});
    Reader l(r.at("limits"), "limits");
    if (l.has("max_tao_iterations")) c.pattern_limits.max_tao_iterations = static_cast<int>(l.unsigned_int("max_tao_iterations", 1));
    if (l.has("max_execute_attempts"))
      c.pattern_limits.max_execute_attempts = static_cast<int>(l.unsigned_int("max_execute_attempts", 1));
    if (l.has("max_model_calls")) c.limits.max_model_calls = static_cast<int>(l.unsigned_int("max_model_calls", 1));
    if (l.has("max_wall_seconds")) c.limits.max_wall = std::chrono::duration<double>(l.positive_number("max_wall_seconds"));
    if (l.has("max_tokens")) c.max_tokens = static_cast<int>(l.unsigned_int("max_tokens", 1));
  }

  if (!r.has("backend")) fail("backend", "required");
  only_keys(r.at("backend"), "backend",
            {"kind", "model", "script", "base_url", "api_key", "retries", "timeout_seconds", "max_in_flight"});
  Reader b(r.at("backend"), "backend");
  const std::string kind = b.has("kind") ? b.string("kind") : "http";
  if (kind == "scripted") {
    c.backend.kind = BackendSettings::Kind::Scripted;
    if (!b.has("script")) fail("backend.script", "required for the scripted backend");
    c.backend.script = resolve(base_dir, b.string("script"));
  } else if (kind == "http") {
    c.backend.kind = BackendSettings::Kind::Http;
  } else {
    fail("backend.kind", "must be scripted or http");
  }
  if (b.has("model")) c.backend.model = b.string("model");
  if (b.has("base_url")) c.backend.http.base_url = b.string("base_url");
  if (b.has("api_key")) c.backend.http.api_key = b.string("api_key");
  if (b.has("retries")) c.backend.http.retries = static_cast<int>(b.unsigned_int("retries"));
  if (b.has("timeout_seconds"))
    c.backend.http.timeout = std::chrono::milliseconds(static_cast<long>(b.positive_number("timeout_seconds") * 1000));
  if (b.has("max_in_flight")) c.backend.http.max_in_flight = static_cast<int>(b.unsigned_int("max_in_flight", 1));

  if (r.has("search")) {
    only_keys(r.at("search"), "search", {"kind", "fixture", "base_url"});
    Reader sr(r.at("search"), "search");
    const std::string skind = sr.has("kind") ? sr.string("kind") : "fixture";
    if (skind == "fixture") {
      c.search.kind = SearchSettings::Kind::Fixture;
      if (!sr.has("fixture")) fail("search.fixture", "required for the fixture search client");
      c.search.fixture = resolve(base_dir, sr.string("fixture"));
    } else if (skind == "wikipedia") {
      c.search.kind = SearchSettings::Kind::Wikipedia;
      if (sr.has("base_url")) c.search.wikipedia.base_url = sr.string("base_url");
    } else {
      fail("search.kind", "must be fixture or wikipedia");
    }
  } else if (c.task == TaskKind::Fever) {
    c.search.kind = SearchSettings::Kind::Wikipedia;
  }

  if (r.has("sandbox")) {
    only_keys(r.at("sandbox"), "sandbox", {"command"});
    Reader sb(r.at("sandbox"), "sandbox");
    if (sb.has("command")) {
      auto cmd = sb.strings("command");
      if (cmd.size() == 1) {
        std::istringstream words(cmd.front());
        cmd.clear();
        for (std::string w; words >> w;) cmd.push_back(w);
      }
      if (cmd.empty()) fail("sandbox.command", "must not be empty");
      c.sandbox_command = cmd;
    }
  }
  if (r.has("system_prompts_dir")) c.system_prompts_dir = resolve(base_dir, r.string("system_prompts_dir"));
  if (r.has("output_dir")) c.output_dir = resolve(base_dir, r.string("output_dir"));
  else c.output_dir = resolve(base_dir, c.output_dir);
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read configuration file", path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  Json doc;
  try {
    doc = yaml_to_json(buffer.str());
  } catch (const Error& e) {
    throw Error(ErrorCode::Config, e.message(), path);
  }
  const auto dir = std::filesystem::path(path).parent_path().string();
  return parse_run_config(doc, dir.empty() ? "." : dir);
}

}  // namespace pdlopt
