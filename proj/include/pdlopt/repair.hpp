#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "pdlopt/json.hpp"
#include "pdlopt/type_spec.hpp"

namespace pdlopt {

// Deterministic JSON repair applied to model output, in this order:
//   R1  take the body of the first Markdown code fence, if any
//   R2  take the first balanced {...} substring (string-aware)
//   R3  drop trailing commas before '}' or ']' (outside strings)

std::string strip_code_fence(std::string_view text);
std::optional<std::string> first_balanced_object(std::string_view text);
std::string strip_trailing_commas(std::string_view text);

/// Parses JSON rejecting nesting deeper than kMaxDepth. nullopt on failure.
std::optional<Json> parse_json_bounded(std::string_view text);

/// Strict parse first; on failure R1..R3 then parse again. Throws
/// Error(Unparseable) when repair does not help, Error(SchemaViolation) when
/// `spec` is given and the value does not conform.
Json parse_model_output(std::string_view raw, const std::optional<TypeSpec>& spec = std::nullopt);

}  // namespace pdlopt
