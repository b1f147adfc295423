#pragma once

#include <string>
#include <string_view>

#include "pdlopt/json.hpp"

namespace pdlopt {

/// Parses a YAML document into JSON using core-schema scalar resolution:
/// quoted scalars are strings; plain scalars become null, booleans, integers,
/// floats or strings. Throws Error(Yaml) on malformed input, duplicate keys
/// or nesting deeper than kMaxDepth.
Json yaml_to_json(std::string_view text);

/// Block-style YAML that yaml_to_json maps back to an equal value.
/// Multi-line strings use literal blocks; anything ambiguous is double-quoted.
std::string json_to_yaml(const Json& value);

}  // namespace pdlopt
