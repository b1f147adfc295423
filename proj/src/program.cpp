#include "pdlopt/program.hpp"

#include <array>
#include <set>

#include "pdlopt/error.hpp"
#include "pdlopt/template.hpp"
#include "pdlopt/yaml.hpp"

namespace pdlopt {

std::string_view to_string(Role role) noexcept {
  switch (role) {
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    case Role::System: return "system";
    case Role::Tool: return "tool";
  }
  return "user";
}

std::optional<Role> parse_role(std::string_view text) noexcept {
  if (text == "user") return Role::User;
  if (text == "assistant") return Role::Assistant;
  if (text == "system") return Role::System;
  if (text == "tool") return Role::Tool;
  return std::nullopt;
}

namespace {

constexpr std::array<std::string_view, 8> kKindKeys = {"text", "model", "code",  "if",
                                                      "repeat", "function", "call", "data"};

[[noreturn]] void invalid(const std::string& path, const std::string& message) {
  throw Error(ErrorCode::InvalidProgram, message, path);
}

std::string field_path(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

class Parser {
 public:
  Block block(const Json& node, const std::string& path, int depth) {
    if (depth > kMaxDepth) throw Error(ErrorCode::Yaml, "program nested deeper than 64 levels", path);
    if (node.is_string()) {
      check_template_at(node.get<std::string>(), path);
      return TextBlock{{text_item(node.get<std::string>())}, std::nullopt, std::nullopt};
    }
    if (node.is_array()) return TextBlock{items(node, path, depth), std::nullopt, std::nullopt};
    if (!node.is_object()) invalid(path, "expected a block, got " + std::string(node.type_name()));

    std::string_view kind;
    for (auto key : kKindKeys) {
      if (!node.contains(std::string(key))) continue;
      if (!kind.empty())
        throw Error(ErrorCode::UnknownBlock,
                    "block has both '" + std::string(kind) + "' and '" + std::string(key) + "'", path);
      kind = key;
    }
    if (kind.empty()) throw Error(ErrorCode::UnknownBlock, "unrecognized block kind", path);

    if (kind == "text") return text(node, path, depth);
    if (kind == "model") return model(node, path);
    if (kind == "code") return code(node, path);
    if (kind == "if") return if_block(node, path, depth);
    if (kind == "repeat") return repeat(node, path, depth);
    if (kind == "function") return function(node, path, depth);
    if (kind == "call") return call(node, path);
    return data(node, path);
  }

 private:
  static void only_keys(const Json& node, const std::string& path,
                        std::initializer_list<std::string_view> allowed) {
    for (const auto& [key, _] : node.items()) {
      bool known = false;
      for (auto a : allowed) known = known || key == a;
      if (!known) throw Error(ErrorCode::UnknownBlock, "unknown key '" + key + "'", field_path(path, key));
    }
  }

  static std::string string_field(const Json& node, const std::string& path, const char* key) {
    const auto& v = node.at(key);
    if (!v.is_string()) invalid(field_path(path, key), std::string(key) + " must be a string");
    return v.get<std::string>();
  }

  static std::optional<std::string> def_field(const Json& node, const std::string& path) {
    auto it = node.find("def");
    if (it == node.end()) return std::nullopt;
    if (!it->is_string() || !valid_identifier(it->get<std::string>()))
      invalid(field_path(path, "def"), "def must be an identifier");
    return it->get<std::string>();
  }

  static std::optional<Role> role_field(const Json& node, const std::string& path) {
    auto it = node.find("role");
    if (it == node.end()) return std::nullopt;
    auto role = it->is_string() ? parse_role(it->get<std::string>()) : std::nullopt;
    if (!role) invalid(field_path(path, "role"), "role must be one of user, assistant, system, tool");
    return role;
  }

  static bool valid_identifier(const std::string& s) {
    if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
    for (char c : s)
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
    return true;
  }

  static void check_template_at(const std::string& source, const std::string& path) {
    try {
      check_template(source);
    } catch (const Error& e) {
      invalid(path, e.message());
    }
  }

  static void check_templates_in(const Json& value, const std::string& path) {
    if (value.is_string()) {
      check_template_at(value.get<std::string>(), path);
    } else if (value.is_structured()) {
      for (const auto& [k, v] : value.items()) check_templates_in(v, path);
    }
  }

  static void check_condition_at(const std::string& source, const std::string& path) {
    try {
      check_condition(source);
    } catch (const Error& e) {
      invalid(path, e.message());
    }
  }

  std::vector<TextItem> items(const Json& list, const std::string& path, int depth) {
    std::vector<TextItem> out;
    for (std::size_t i = 0; i < list.size(); ++i) {
      const auto& item = list[i];
      const std::string item_path = path + "[" + std::to_string(i) + "]";
      if (item.is_string()) {
        check_template_at(item.get<std::string>(), item_path);
        out.push_back(text_item(item.get<std::string>()));
      } else if (item.is_number() || item.is_boolean()) {
        out.push_back(text_item(item.dump()));
      } else if (item.is_structured()) {
        out.push_back(text_item(block(item, item_path, depth + 1)));
      } else {
        invalid(item_path, "text items must be strings or blocks");
      }
    }
    return out;
  }

  Block text(const Json& node, const std::string& path, int depth) {
    only_keys(node, path, {"text", "def", "role"});
    TextBlock t;
    t.def = def_field(node, path);
    t.role = role_field(node, path);
    const auto& body = node.at("text");
    const std::string body_path = field_path(path, "text");
    if (body.is_string()) {
      check_template_at(body.get<std::string>(), body_path);
      t.items.push_back(text_item(body.get<std::string>()));
    } else if (body.is_array()) {
      t.items = items(body, body_path, depth);
    } else if (!body.is_null()) {
      invalid(body_path, "text must be a string or a list");
    }
    return t;
  }

  Block model(const Json& node, const std::string& path) {
    only_keys(node, path, {"model", "def", "parser", "spec", "role"});
    ModelBlock m;
    m.model_id = string_field(node, path, "model");
    check_template_at(m.model_id, field_path(path, "model"));
    m.def = def_field(node, path);
    m.role = role_field(node, path);
    if (auto it = node.find("parser"); it != node.end()) {
      if (*it != "json") invalid(field_path(path, "parser"), "the only supported parser is json");
      m.parse_json = true;
    }
    if (auto it = node.find("spec"); it != node.end())
      m.spec = type_spec_from_json(*it, field_path(path, "spec"));
    return m;
  }

  Block code(const Json& node, const std::string& path) {
    only_keys(node, path, {"code", "runtime", "def"});
    CodeBlock c;
    c.source = string_field(node, path, "code");
    check_template_at(c.source, field_path(path, "code"));
    c.def = def_field(node, path);
    if (node.contains("runtime")) {
      const auto runtime = string_field(node, path, "runtime");
      if (runtime == "sandbox") {
        c.runtime = CodeRuntime::Sandbox;
      } else if (runtime == "calc") {
        c.runtime = CodeRuntime::Calc;
      } else {
        invalid(field_path(path, "runtime"), "runtime must be sandbox or calc");
      }
    }
    return c;
  }

  Block if_block(const Json& node, const std::string& path, int depth) {
    only_keys(node, path, {"if", "then", "else"});
    std::string condition = string_field(node, path, "if");
    check_condition_at(condition, field_path(path, "if"));
    if (!node.contains("then")) invalid(path, "if block needs 'then'");
    IfBlock b{std::move(condition), block(node.at("then"), field_path(path, "then"), depth + 1),
              std::nullopt};
    if (node.contains("else")) b.otherwise = block(node.at("else"), field_path(path, "else"), depth + 1);
    return b;
  }

  Block repeat(const Json& node, const std::string& path, int depth) {
    only_keys(node, path, {"repeat", "max_iterations", "until"});
    if (!node.contains("max_iterations")) invalid(path, "repeat needs max_iterations");
    if (!node.contains("until")) invalid(path, "repeat needs until");
    const auto& n = node.at("max_iterations");
    if (!n.is_number_integer() || n.get<long long>() < 1 || n.get<long long>() > 1'000'000)
      invalid(field_path(path, "max_iterations"), "max_iterations must be a positive integer");
    std::string until = string_field(node, path, "until");
    check_condition_at(until, field_path(path, "until"));
    return RepeatBlock{block(node.at("repeat"), field_path(path, "repeat"), depth + 1),
                       static_cast<int>(n.get<long long>()), std::move(until)};
  }

  Block function(const Json& node, const std::string& path, int depth) {
    only_keys(node, path, {"function", "def", "return", "result"});
    auto name = def_field(node, path);
    if (!name) invalid(path, "function needs a def name");
    if (!node.contains("return")) invalid(path, "function needs a return body");
    const auto& params = node.at("function");
    std::vector<std::pair<std::string, TypeSpec>> parsed;
    if (params.is_object()) {
      for (const auto& [pname, pspec] : params.items()) {
        if (!valid_identifier(pname)) invalid(field_path(path, "function"), "bad parameter name '" + pname + "'");
        parsed.emplace_back(pname, type_spec_from_json(pspec, field_path(path, "function." + pname)));
      }
    } else if (!params.is_null()) {
      invalid(field_path(path, "function"), "parameters must be a mapping");
    }
    std::optional<std::string> result;
    if (node.contains("result")) {
      result = string_field(node, path, "result");
      check_template_at(*result, field_path(path, "result"));
    }
    return FunctionDef{*name, std::move(parsed), block(node.at("return"), field_path(path, "return"), depth + 1),
                       std::move(result)};
  }

  Block call(const Json& node, const std::string& path) {
    only_keys(node, path, {"call", "args", "def"});
    CallBlock c;
    c.function = string_field(node, path, "call");
    c.def = def_field(node, path);
    if (auto it = node.find("args"); it != node.end() && !it->is_null()) {
      if (!it->is_object()) invalid(field_path(path, "args"), "args must be a mapping");
      check_templates_in(*it, field_path(path, "args"));
      c.args = *it;
    }
    return c;
  }

  Block data(const Json& node, const std::string& path) {
    only_keys(node, path, {"data", "def"});
    return DataBlock{node.at("data"), def_field(node, path)};
  }
};

// Every `def:` name (and function name / parameter) is unique within its
// scope; function bodies open a new scope.
void check_defs(const Block& block, std::set<std::string>& seen, const std::string& path);

void record(const std::optional<std::string>& def, std::set<std::string>& seen, const std::string& path) {
  if (def && !seen.insert(*def).second)
    throw Error(ErrorCode::DuplicateDef, "'" + *def + "' is defined more than once in this scope", path);
}

void check_defs(const Block& block, std::set<std::string>& seen, const std::string& path) {
  std::visit(
      [&](const auto& b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, TextBlock>) {
          record(b.def, seen, path);
          for (std::size_t i = 0; i < b.items.size(); ++i)
            if (const auto* child = std::get_if<Box<Block>>(&b.items[i].value))
              check_defs(**child, seen, path + ".text[" + std::to_string(i) + "]");
        } else if constexpr (std::is_same_v<T, IfBlock>) {
          check_defs(*b.then, seen, path + ".then");
          if (b.otherwise) check_defs(**b.otherwise, seen, path + ".else");
        } else if constexpr (std::is_same_v<T, RepeatBlock>) {
          check_defs(*b.body, seen, path + ".repeat");
        } else if constexpr (std::is_same_v<T, FunctionDef>) {
          record(b.name, seen, path);
          std::set<std::string> inner;
          for (const auto& [name, _] : b.params) record(name, inner, path + ".function");
          check_defs(*b.body, inner, path + ".return");
        } else {
          record(b.def, seen, path);
        }
      },
      block.node);
}

std::string strip_root(const std::string& path) { return path.size() > 1 && path[0] == '.' ? path.substr(1) : path; }

}  // namespace

Program program_from_json(const Json& document) {
  Program p{Parser().block(document, "", 0)};
  std::set<std::string> seen;
  try {
    check_defs(p.root, seen, "");
  } catch (const Error& e) {
    throw Error(e.code(), e.message(), strip_root(e.path()));
  }
  return p;
}

Program parse_program(std::string_view yaml_text) { return program_from_json(yaml_to_json(yaml_text)); }

Json block_to_json(const Block& block) {
  return std::visit(
      [](const auto& b) -> Json {
        using T = std::decay_t<decltype(b)>;
        Json out = Json::object();
        if constexpr (std::is_same_v<T, TextBlock>) {
          if (b.def) out["def"] = *b.def;
          if (b.role) out["role"] = to_string(*b.role);
          Json items = Json::array();
          for (const auto& item : b.items) {
            if (const auto* s = std::get_if<std::string>(&item.value)) {
              items.push_back(*s);
            } else {
              items.push_back(block_to_json(*std::get<Box<Block>>(item.value)));
            }
          }
          out["text"] = std::move(items);
        } else if constexpr (std::is_same_v<T, ModelBlock>) {
          if (b.def) out["def"] = *b.def;
          out["model"] = b.model_id;
          if (b.parse_json) out["parser"] = "json";
          if (b.spec) out["spec"] = type_spec_to_json(*b.spec);
          if (b.role) out["role"] = to_string(*b.role);
        } else if constexpr (std::is_same_v<T, CodeBlock>) {
          if (b.def) out["def"] = *b.def;
          out["runtime"] = b.runtime == CodeRuntime::Calc ? "calc" : "sandbox";
          out["code"] = b.source;
        } else if constexpr (std::is_same_v<T, IfBlock>) {
          out["if"] = b.condition;
          out["then"] = block_to_json(*b.then);
          if (b.otherwise) out["else"] = block_to_json(**b.otherwise);
        } else if constexpr (std::is_same_v<T, RepeatBlock>) {
          out["repeat"] = block_to_json(*b.body);
          out["max_iterations"] = b.max_iterations;
          out["until"] = b.until;
        } else if constexpr (std::is_same_v<T, FunctionDef>) {
          out["def"] = b.name;
          Json params = Json::object();
          for (const auto& [name, spec] : b.params) params[name] = type_spec_to_json(spec);
          out["function"] = std::move(params);
          if (b.result) out["result"] = *b.result;
          out["return"] = block_to_json(*b.body);
        } else if constexpr (std::is_same_v<T, CallBlock>) {
          if (b.def) out["def"] = *b.def;
          out["call"] = b.function;
          if (!b.args.empty()) out["args"] = b.args;
        } else {
          if (b.def) out["def"] = *b.def;
          out["data"] = b.value;
        }
        return out;
      },
      block.node);
}

Json program_to_json(const Program& program) { return block_to_json(program.root); }

std::string serialize_program(const Program& program) { return json_to_yaml(program_to_json(program)); }

}  // namespace pdlopt
