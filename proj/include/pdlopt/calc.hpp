#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace pdlopt::calc {

/// Normalizes model-written arithmetic, in order:
///   1. `^` becomes `**`
///   2. `$` is removed
///   3. thousands separators inside numbers are removed ("1,234" -> "1234")
///   4. a percent sign directly after a number or ')' and before ')' or the
///      end is removed ("50%" -> "50"); `a % b` stays a modulo
///   5. whitespace runs collapse to one space; ends are trimmed
/// Idempotent: clean(clean(e)) == clean(e).
std::string clean(std::string_view expr);

/// Evaluates a cleaned expression with exact rational arithmetic.
/// Grammar: + - * / // % ** and parentheses over decimal literals, with
/// Python precedence (`**` binds tighter than unary minus on its left).
/// Returns the canonical rendering (see format rules in calc.cpp), or nullopt
/// when the expression is invalid.
std::optional<std::string> evaluate(std::string_view expr);

}  // namespace pdlopt::calc
