#include "pdlopt/yaml.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cmath>
#include <limits>
#include <regex>

#include "pdlopt/error.hpp"

namespace pdlopt {

namespace {

const std::regex& int_re() {
  static const std::regex re(R"([-+]?[0-9]+)");
  return re;
}
const std::regex& float_re() {
  static const std::regex re(R"([-+]?(\.[0-9]+|[0-9]+(\.[0-9]*)?)([eE][-+]?[0-9]+)?)");
  return re;
}

// Core-schema resolution of a plain scalar.
Json resolve_plain(const std::string& s) {
  if (s.empty() || s == "~" || s == "null" || s == "Null" || s == "NULL") return nullptr;
  if (s == "true" || s == "True" || s == "TRUE") return true;
  if (s == "false" || s == "False" || s == "FALSE") return false;
  if (std::regex_match(s, int_re())) {
    long long v = 0;
    const char* begin = s.data() + (s[0] == '+' ? 1 : 0);
    auto [ptr, ec] = std::from_chars(begin, s.data() + s.size(), v);
    if (ec == std::errc() && ptr == s.data() + s.size()) return v;
    return std::stod(s);
  }
  if (std::regex_match(s, float_re())) return std::stod(s);
  if (s == ".inf" || s == ".Inf" || s == "+.inf") return std::numeric_limits<double>::infinity();
  if (s == "-.inf" || s == "-.Inf") return -std::numeric_limits<double>::infinity();
  return s;
}

Json convert(const YAML::Node& node, int depth) {
  if (depth > kMaxDepth) throw Error(ErrorCode::Yaml, "document nested deeper than 64 levels");
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Scalar:
      if (node.Tag() == "?") return resolve_plain(node.Scalar());
      return node.Scalar();
    case YAML::NodeType::Sequence: {
      Json out = Json::array();
      for (const auto& child : node) out.push_back(convert(child, depth + 1));
      return out;
    }
    case YAML::NodeType::Map: {
      Json out = Json::object();
      for (const auto& kv : node) {
        if (!kv.first.IsScalar()) throw Error(ErrorCode::Yaml, "mapping keys must be scalars");
        const std::string key = kv.first.Scalar();
        if (out.contains(key)) throw Error(ErrorCode::Yaml, "duplicate key '" + key + "'");
        out[key] = convert(kv.second, depth + 1);
      }
      return out;
    }
  }
  return nullptr;
}

// ---- emitter ----

bool is_plain_safe(const std::string& s) {
  if (s.empty()) return false;
  if (std::isspace(static_cast<unsigned char>(s.front())) || std::isspace(static_cast<unsigned char>(s.back())))
    return false;
  static constexpr std::string_view kLeading = "-?:,[]{}#&*!|>'\"%@`";
  if (kLeading.find(s.front()) != std::string_view::npos) return false;
  for (unsigned char c : s) {
    if (c < 0x20 || c == 0x7f) return false;
    if (c == '{' || c == '}' || c == '[' || c == ']') return false;
  }
  if (s.find(": ") != std::string::npos || s.find(" #") != std::string::npos || s.back() == ':') return false;
  return resolve_plain(s).is_string();
}

bool is_literal_safe(const std::string& s) {
  if (s.find('\n') == std::string::npos) return false;
  for (unsigned char c : s) {
    if (c == '\n') continue;
    if (c < 0x20 || c == 0x7f) return false;
  }
  // The first non-empty line fixes the block indentation; it must not start
  // with a space, and there must be one.
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t end = s.find('\n', pos);
    if (end == std::string::npos) end = s.size();
    if (end > pos) return s[pos] != ' ';
    pos = end + 1;
  }
  return false;
}

std::string double_quoted(const std::string& s) {
  std::string out = "\"";
  for (unsigned char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (c < 0x20 || c == 0x7f) {
          static constexpr char kHex[] = "0123456789abcdef";
          out += "\\x";
          out += kHex[c >> 4];
          out += kHex[c & 0xf];
        } else {
          out += static_cast<char>(c);
        }
    }
  }
  return out + "\"";
}

std::string spaces(int n) { return std::string(static_cast<std::size_t>(n), ' '); }

std::string scalar_text(const Json& v) {
  switch (v.type()) {
    case Json::value_t::null: return "null";
    case Json::value_t::boolean: return v.get<bool>() ? "true" : "false";
    case Json::value_t::number_integer:
    case Json::value_t::number_unsigned: return v.dump();
    case Json::value_t::number_float: {
      double d = v.get<double>();
      if (std::isinf(d)) return d > 0 ? ".inf" : "-.inf";
      return v.dump();
    }
    case Json::value_t::array: return "[]";
    case Json::value_t::object: return "{}";
    default: break;
  }
  const auto& s = v.get_ref<const std::string&>();
  return is_plain_safe(s) ? s : double_quoted(s);
}

bool is_inline(const Json& v) { return !v.is_structured() || v.empty(); }

class Emitter {
 public:
  std::string out;

  void object(const Json& obj, int indent) {
    for (const auto& [key, value] : obj.items()) {
      out += spaces(indent) + (is_plain_safe(key) ? key : double_quoted(key)) + ":";
      after_indicator(value, indent);
    }
  }

  void array(const Json& arr, int indent) {
    for (const auto& value : arr) {
      if (is_inline(value) || is_literal(value)) {
        out += spaces(indent) + "-";
        after_indicator(value, indent);
        continue;
      }
      // Nested container: render at indent+2, then pull its first line up
      // onto the dash.
      Emitter nested;
      if (value.is_object()) {
        nested.object(value, indent + 2);
      } else {
        nested.array(value, indent + 2);
      }
      out += spaces(indent) + "- " + nested.out.substr(static_cast<std::size_t>(indent) + 2);
    }
  }

 private:
  static bool is_literal(const Json& v) {
    return v.is_string() && is_literal_safe(v.get_ref<const std::string&>());
  }

  // Emits a value following "key:" or "-".
  void after_indicator(const Json& value, int indent) {
    if (is_literal(value)) {
      literal(value.get_ref<const std::string&>(), indent + 2);
    } else if (is_inline(value)) {
      out += " " + scalar_text(value) + "\n";
    } else if (value.is_object()) {
      out += "\n";
      object(value, indent + 2);
    } else {
      out += "\n";
      array(value, indent + 2);
    }
  }

  void literal(const std::string& s, int indent) {
    std::size_t trailing = 0;
    while (trailing < s.size() && s[s.size() - 1 - trailing] == '\n') ++trailing;
    std::string_view body(s.data(), s.size() - trailing);
    out += trailing == 0 ? " |-\n" : trailing == 1 ? " |\n" : " |+\n";
    std::size_t pos = 0;
    while (pos <= body.size()) {
      std::size_t end = body.find('\n', pos);
      if (end == std::string_view::npos) end = body.size();
      auto line = body.substr(pos, end - pos);
      if (!line.empty()) out += spaces(indent);
      out += line;
      out += "\n";
      pos = end + 1;
    }
    for (std::size_t i = 1; i < trailing; ++i) out += "\n";
  }
};

}  // namespace

Json yaml_to_json(std::string_view text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::Yaml, e.what());
  }
  try {
    return convert(root, 0);
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::Yaml, e.what());
  }
}

std::string json_to_yaml(const Json& value) {
  if (is_inline(value)) return scalar_text(value) + "\n";
  Emitter e;
  if (value.is_object()) {
    e.object(value, 0);
  } else {
    e.array(value, 0);
  }
  return e.out;
}

}  // namespace pdlopt
