#include "pdlopt/repair.hpp"

#include <vector>

#include "pdlopt/error.hpp"

namespace pdlopt {

std::string strip_code_fence(std::string_view text) {
  auto open = text.find("```");
  if (open == std::string_view::npos) return std::string(text);
  // Skip the info string ("json", "python", ...) up to the end of the line.
  auto body = text.find('\n', open + 3);
  if (body == std::string_view::npos) return std::string(text);
  ++body;
  auto close = text.find("```", body);
  if (close == std::string_view::npos) return std::string(text.substr(body));
  return std::string(text.substr(body, close - body));
}

std::optional<std::string> first_balanced_object(std::string_view text) {
  const auto first = text.find('{');
  if (first == std::string_view::npos) return std::nullopt;
  // One pass with a stack of open braces; the matched pair with the smallest
  // start is the earliest balanced object, even when an earlier brace never
  // closes.
  std::vector<std::size_t> open;
  std::size_t best_start = std::string_view::npos;
  std::size_t best_end = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = first; i < text.size(); ++i) {
    char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      open.push_back(i);
    } else if (c == '}' && !open.empty()) {
      std::size_t start = open.back();
      open.pop_back();
      if (start < best_start) {
        best_start = start;
        best_end = i;
      }
    }
  }
  if (best_start == std::string_view::npos) return std::nullopt;
  return std::string(text.substr(best_start, best_end - best_start + 1));
}

std::string strip_trailing_commas(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (in_string) {
      out += c;
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') in_string = true;
    if (c == ',') {
      std::size_t j = i + 1;
      while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
      if (j < text.size() && (text[j] == '}' || text[j] == ']')) continue;
    }
    out += c;
  }
  return out;
}

std::optional<Json> parse_json_bounded(std::string_view text) {
  // Depth pre-scan.
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (char c : text) {
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{' || c == '[') {
      if (++depth > kMaxDepth) return std::nullopt;
    } else if (c == '}' || c == ']') {
      --depth;
    }
  }
  auto parsed = Json::parse(text.begin(), text.end(), nullptr, /*allow_exceptions=*/false);
  if (parsed.is_discarded()) return std::nullopt;
  return parsed;
}

Json parse_model_output(std::string_view raw, const std::optional<TypeSpec>& spec) {
  auto value = parse_json_bounded(raw);
  if (!value) {
    std::string repaired = strip_code_fence(raw);
    if (auto object = first_balanced_object(repaired)) repaired = std::move(*object);
    repaired = strip_trailing_commas(repaired);
    value = parse_json_bounded(repaired);
  }
  if (!value) throw Error(ErrorCode::Unparseable, "model output is not JSON, even after repair");
  if (spec) {
    auto result = validate_value(*value, *spec);
    if (!result.ok()) {
      const auto& v = result.violations.front();
      throw Error(ErrorCode::SchemaViolation, v.message, v.path);
    }
  }
  return *value;
}

}  // namespace pdlopt
