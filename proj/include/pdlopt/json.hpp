#pragma once

#include <json.hpp>  // vendored nlohmann/json

namespace pdlopt {

// Insertion-ordered.
using Json = nlohmann::ordered_json;

/// Maximum nesting depth accepted for JSON values and program ASTs.
inline constexpr int kMaxDepth = 64;

}  // namespace pdlopt
