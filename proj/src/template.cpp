#include "pdlopt/template.hpp"

#include <cctype>

#include "pdlopt/error.hpp"

namespace pdlopt {

namespace {

enum class CompareOp { None, Eq, Ne };

struct Expression {
  TemplatePath path;
  CompareOp op = CompareOp::None;
  Json literal;
};

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

[[noreturn]] void syntax_error(std::string_view what, std::size_t offset) {
  throw Error(ErrorCode::TemplateSyntax, std::string(what) + " at offset " + std::to_string(offset),
              std::to_string(offset));
}

class Cursor {
 public:
  Cursor(std::string_view text, std::size_t pos) : text_(text), pos_(pos) {}

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return at_end() ? '\0' : text_[pos_]; }
  std::size_t pos() const { return pos_; }
  void advance(std::size_t n = 1) { pos_ += n; }
  bool consume(std::string_view s) {
    if (text_.substr(pos_, s.size()) == s) {
      pos_ += s.size();
      return true;
    }
    return false;
  }

  std::string identifier() {
    if (!is_ident_start(peek())) syntax_error("expected identifier", pos_);
    std::size_t start = pos_;
    while (!at_end() && is_ident_char(peek())) ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }

  TemplatePath path() {
    TemplatePath p;
    p.root = identifier();
    while (!at_end()) {
      if (peek() == '.') {
        advance();
        p.segments.push_back({identifier()});
      } else if (peek() == '[') {
        advance();
        std::size_t start = pos_;
        while (!at_end() && std::isdigit(static_cast<unsigned char>(peek()))) ++pos_;
        if (start == pos_) syntax_error("expected array index", pos_);
        std::size_t index = std::stoull(std::string(text_.substr(start, pos_ - start)));
        if (!consume("]")) syntax_error("expected ']'", pos_);
        p.segments.push_back({index});
      } else {
        break;
      }
    }
    return p;
  }

  Json literal() {
    std::size_t start = pos_;
    if (peek() == '"') {
      advance();
      while (!at_end() && peek() != '"') {
        if (peek() == '\\') advance();
        advance();
      }
      if (!consume("\"")) syntax_error("unterminated string literal", start);
    } else {
      while (!at_end() && !std::isspace(static_cast<unsigned char>(peek())) && peek() != '}') advance();
    }
    auto text = text_.substr(start, pos_ - start);
    auto parsed = Json::parse(text.begin(), text.end(), nullptr, false);
    if (parsed.is_discarded() || parsed.is_structured()) syntax_error("invalid literal", start);
    return parsed;
  }

 private:
  std::string_view text_;
  std::size_t pos_;
};

// Parses the expression following "${" up to and including the closing '}'.
Expression parse_expression(Cursor& c, bool allow_compare) {
  Expression e;
  c.skip_ws();
  e.path = c.path();
  c.skip_ws();
  if (c.consume("==")) {
    e.op = CompareOp::Eq;
  } else if (c.consume("!=")) {
    e.op = CompareOp::Ne;
  }
  if (e.op != CompareOp::None) {
    if (!allow_compare) syntax_error("comparisons are only allowed in conditions", c.pos());
    c.skip_ws();
    e.literal = c.literal();
    c.skip_ws();
  }
  if (!c.consume("}")) syntax_error("expected '}'", c.pos());
  return e;
}

// Calls `on_text` for literal runs and `on_expr` for each expression.
template <typename OnText, typename OnExpr>
void scan(std::string_view source, bool allow_compare, OnText on_text, OnExpr on_expr) {
  std::size_t pos = 0;
  while (pos < source.size()) {
    std::size_t open = source.find("${", pos);
    if (open == std::string_view::npos) {
      on_text(source.substr(pos));
      return;
    }
    on_text(source.substr(pos, open - pos));
    Cursor c(source, open + 2);
    on_expr(parse_expression(c, allow_compare));
    pos = c.pos();
  }
}

std::string stringify(const Json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

// A condition is exactly one expression, optionally surrounded by whitespace.
Expression parse_condition(std::string_view source) {
  std::size_t first = 0;
  while (first < source.size() && std::isspace(static_cast<unsigned char>(source[first]))) ++first;
  Cursor c(source, first);
  if (!c.consume("${")) syntax_error("condition must be a single ${ ... } expression", first);
  Expression e = parse_expression(c, /*allow_compare=*/true);
  c.skip_ws();
  if (!c.at_end()) syntax_error("trailing text after condition", c.pos());
  return e;
}

}  // namespace

std::string TemplatePath::text() const {
  std::string out = root;
  for (const auto& seg : segments) {
    if (const auto* name = std::get_if<std::string>(&seg.key)) {
      out += "." + *name;
    } else {
      out += "[" + std::to_string(std::get<std::size_t>(seg.key)) + "]";
    }
  }
  return out;
}

const Json& resolve_path(const TemplatePath& path, const Lookup& lookup) {
  const Json* current = lookup(path.root);
  if (current == nullptr) throw Error(ErrorCode::UnboundPath, "'" + path.text() + "' is not bound", path.text());
  for (const auto& seg : path.segments) {
    if (const auto* name = std::get_if<std::string>(&seg.key)) {
      if (!current->is_object() || !current->contains(*name))
        throw Error(ErrorCode::UnboundPath, "'" + path.text() + "' is not bound", path.text());
      current = &(*current)[*name];
    } else {
      std::size_t index = std::get<std::size_t>(seg.key);
      if (!current->is_array() || index >= current->size())
        throw Error(ErrorCode::UnboundPath, "'" + path.text() + "' is not bound", path.text());
      current = &(*current)[index];
    }
  }
  return *current;
}

TemplatePath parse_path(std::string_view text) {
  Cursor c(text, 0);
  TemplatePath p = c.path();
  if (!c.at_end()) syntax_error("trailing text after path", c.pos());
  return p;
}

std::string render_template(std::string_view source, const Lookup& lookup) {
  std::string out;
  out.reserve(source.size());
  scan(
      source, /*allow_compare=*/false, [&](std::string_view text) { out += text; },
      [&](const Expression& e) { out += stringify(resolve_path(e.path, lookup)); });
  return out;
}

std::string render_template(std::string_view source, const Json& scope) {
  return render_template(source, [&](std::string_view name) -> const Json* {
    if (!scope.is_object()) return nullptr;
    auto it = scope.find(std::string(name));
    return it == scope.end() ? nullptr : &*it;
  });
}

std::optional<TemplatePath> sole_path(std::string_view source) {
  std::size_t first = 0;
  while (first < source.size() && std::isspace(static_cast<unsigned char>(source[first]))) ++first;
  if (source.substr(first, 2) != "${") return std::nullopt;
  try {
    Cursor c(source, first + 2);
    Expression e = parse_expression(c, /*allow_compare=*/false);
    c.skip_ws();
    if (!c.at_end()) return std::nullopt;
    return e.path;
  } catch (const Error&) {
    return std::nullopt;
  }
}

Json render_value(const Json& value, const Lookup& lookup) {
  if (value.is_string()) {
    const auto& s = value.get_ref<const std::string&>();
    if (auto path = sole_path(s)) return resolve_path(*path, lookup);
    return render_template(s, lookup);
  }
  if (value.is_array()) {
    Json out = Json::array();
    for (const auto& v : value) out.push_back(render_value(v, lookup));
    return out;
  }
  if (value.is_object()) {
    Json out = Json::object();
    for (const auto& [k, v] : value.items()) out[k] = render_value(v, lookup);
    return out;
  }
  return value;
}

bool truthy(const Json& value) {
  switch (value.type()) {
    case Json::value_t::null: return false;
    case Json::value_t::boolean: return value.get<bool>();
    case Json::value_t::number_integer:
    case Json::value_t::number_unsigned:
    case Json::value_t::number_float: return value.get<double>() != 0.0;
    case Json::value_t::string: return !value.get_ref<const std::string&>().empty();
    case Json::value_t::array:
    case Json::value_t::object: return !value.empty();
    default: return false;
  }
}

bool evaluate_condition(std::string_view source, const Lookup& lookup) {
  Expression e = parse_condition(source);
  const Json& value = resolve_path(e.path, lookup);
  switch (e.op) {
    case CompareOp::None: return truthy(value);
    case CompareOp::Eq: return value == e.literal;
    case CompareOp::Ne: return value != e.literal;
  }
  return false;
}

void check_condition(std::string_view source) { (void)parse_condition(source); }

void check_template(std::string_view source) {
  scan(source, /*allow_compare=*/false, [](std::string_view) {}, [](const Expression&) {});
}

std::vector<std::string> template_roots(std::string_view source) {
  std::vector<std::string> roots;
  scan(source, /*allow_compare=*/true, [](std::string_view) {},
       [&](const Expression& e) { roots.push_back(e.path.root); });
  return roots;
}

}  // namespace pdlopt
