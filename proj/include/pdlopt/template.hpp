#pragma once

// Template expressions: `${ path }` where
//   path := identifier ( '.' identifier | '[' integer ']' )*
// No filters, no arithmetic. Conditions (If.condition, Repeat.until) may also
// compare a path against a JSON literal with `==` or `!=`.

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pdlopt/json.hpp"

namespace pdlopt {

struct PathSegment {
  std::variant<std::string, std::size_t> key;  // field name or array index
  friend bool operator==(const PathSegment&, const PathSegment&) = default;
};

struct TemplatePath {
  std::string root;
  std::vector<PathSegment> segments;
  std::string text() const;
  friend bool operator==(const TemplatePath&, const TemplatePath&) = default;
};

/// Resolves the root identifier of a path; nullptr when unbound.
using Lookup = std::function<const Json*(std::string_view)>;

/// Throws Error(UnboundPath) when any segment is missing.
const Json& resolve_path(const TemplatePath& path, const Lookup& lookup);

/// Parses a bare path such as `t.name` or `xs[0].y`.
TemplatePath parse_path(std::string_view text);

/// Replaces every `${ path }` with the bound value: strings verbatim, other
/// values as compact JSON. Literal text passes through byte-exact.
std::string render_template(std::string_view source, const Lookup& lookup);

/// Convenience overload resolving roots in a JSON object.
std::string render_template(std::string_view source, const Json& scope);

/// When `source` is exactly one `${ path }` (surrounding whitespace allowed),
/// returns the path. Used to pass values through without stringification.
std::optional<TemplatePath> sole_path(std::string_view source);

/// Renders a value-or-template: a string that is exactly one `${ path }`
/// yields the bound JSON value; other strings are rendered; arrays and objects
/// are rendered element-wise; scalars pass through.
Json render_value(const Json& value, const Lookup& lookup);

/// Evaluates a condition `${ path }` (truthiness) or
/// `${ path == literal }` / `${ path != literal }`.
bool evaluate_condition(std::string_view source, const Lookup& lookup);

/// Throws Error(TemplateSyntax) when `source` is not a well-formed condition.
void check_condition(std::string_view source);

/// Throws Error(TemplateSyntax) when `source` is not a well-formed template.
void check_template(std::string_view source);

/// Null, false, 0, "" and empty containers are false.
bool truthy(const Json& value);

/// Root identifiers referenced by a template (in order of appearance).
std::vector<std::string> template_roots(std::string_view source);

}  // namespace pdlopt
