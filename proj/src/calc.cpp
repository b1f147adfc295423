#include "pdlopt/calc.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <cctype>
#include <cmath>
#include <regex>
#include <sstream>
#include <variant>

namespace pdlopt::calc {

namespace mp = boost::multiprecision;
using Int = mp::cpp_int;
using Rational = mp::cpp_rational;

namespace {

// Results are exact until a non-integer power forces floating point.
using Value = std::variant<Rational, long double>;

constexpr std::size_t kMaxResultBits = 1 << 16;
constexpr int kFractionDigits = 10;

struct Invalid {};

long double to_float(const Value& v) {
  if (const auto* r = std::get_if<Rational>(&v)) return mp::numerator(*r).convert_to<long double>() /
                                                       mp::denominator(*r).convert_to<long double>();
  return std::get<long double>(v);
}

Rational floor_div(const Rational& a, const Rational& b) {
  Rational q = a / b;
  Int n = mp::numerator(q);
  Int d = mp::denominator(q);
  Int f = n / d;  // truncates toward zero
  if (n < 0 && f * d != n) f -= 1;
  return Rational(f);
}

Value binary(char op, const Value& a, const Value& b) {
  if (std::holds_alternative<Rational>(a) && std::holds_alternative<Rational>(b)) {
    const auto& x = std::get<Rational>(a);
    const auto& y = std::get<Rational>(b);
    switch (op) {
      case '+': return x + y;
      case '-': return x - y;
      case '*': return x * y;
      case '/':
        if (y == 0) throw Invalid{};
        return x / y;
      case 'f':  // floor division
        if (y == 0) throw Invalid{};
        return floor_div(x, y);
      case '%':
        if (y == 0) throw Invalid{};
        return x - y * floor_div(x, y);
      default: throw Invalid{};
    }
  }
  long double x = to_float(a);
  long double y = to_float(b);
  switch (op) {
    case '+': return x + y;
    case '-': return x - y;
    case '*': return x * y;
    case '/':
      if (y == 0) throw Invalid{};
      return x / y;
    case 'f':
      if (y == 0) throw Invalid{};
      return std::floor(x / y);
    case '%':
      if (y == 0) throw Invalid{};
      return x - y * std::floor(x / y);
    default: throw Invalid{};
  }
}

Value power(const Value& base, const Value& exponent) {
  const auto* b = std::get_if<Rational>(&base);
  const auto* e = std::get_if<Rational>(&exponent);
  if (b && e && mp::denominator(*e) == 1) {
    Int n = mp::numerator(*e);
    if (n > 100000 || n < -100000) throw Invalid{};
    if (*b == 0 && n < 0) throw Invalid{};
    const auto exp = static_cast<unsigned>(mp::abs(n).convert_to<long long>());
    const Int num = mp::abs(mp::numerator(*b));
    const Int den = mp::denominator(*b);
    const std::size_t bits = std::max<std::size_t>(num == 0 ? 0 : mp::msb(num) + 1, mp::msb(den) + 1);
    if (bits * exp > kMaxResultBits) throw Invalid{};
    Rational r(mp::pow(mp::numerator(*b), exp), mp::pow(den, exp));
    return n < 0 ? Rational(1) / r : r;
  }
  long double x = to_float(base);
  long double y = to_float(exponent);
  long double r = std::pow(x, y);
  if (!std::isfinite(r)) throw Invalid{};
  return r;
}

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  Value parse() {
    Value v = expr();
    skip_ws();
    if (pos_ != text_.size()) throw Invalid{};
    return v;
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  bool consume(std::string_view s) {
    skip_ws();
    if (text_.substr(pos_, s.size()) == s) {
      pos_ += s.size();
      return true;
    }
    return false;
  }
  bool peek(std::string_view s) {
    skip_ws();
    return text_.substr(pos_, s.size()) == s;
  }

  Value expr() {
    Value v = term();
    while (true) {
      if (consume("+")) {
        v = binary('+', v, term());
      } else if (consume("-")) {
        v = binary('-', v, term());
      } else {
        return v;
      }
    }
  }

  Value term() {
    Value v = unary();
    while (true) {
      if (peek("**")) return v;
      if (consume("//")) {
        v = binary('f', v, unary());
      } else if (consume("*")) {
        v = binary('*', v, unary());
      } else if (consume("/")) {
        v = binary('/', v, unary());
      } else if (consume("%")) {
        v = binary('%', v, unary());
      } else {
        return v;
      }
    }
  }

  Value unary() {
    if (++depth_ > 200) throw Invalid{};
    Value v;
    if (consume("-")) {
      v = binary('-', Rational(0), unary());
    } else if (consume("+")) {
      v = unary();
    } else {
      v = pow_expr();
    }
    --depth_;
    return v;
  }

  Value pow_expr() {
    Value base = atom();
    if (consume("**")) return power(base, unary());
    return base;
  }

  Value atom() {
    if (consume("(")) {
      Value v = expr();
      if (!consume(")")) throw Invalid{};
      return v;
    }
    skip_ws();
    return number();
  }

  Value number() {
    static const std::regex re(R"(^(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?)");
    std::match_results<std::string_view::const_iterator> m;
    if (!std::regex_search(text_.begin() + static_cast<std::ptrdiff_t>(pos_), text_.end(), m, re))
      throw Invalid{};
    const std::string mantissa = m[1].str();
    const std::string exponent = m[2].matched ? m[2].str().substr(1) : "0";
    pos_ += static_cast<std::size_t>(m.length(0));

    std::string digits;
    std::size_t frac = 0;
    bool after_dot = false;
    for (char c : mantissa) {
      if (c == '.') {
        after_dot = true;
        continue;
      }
      digits += c;
      if (after_dot) ++frac;
    }
    long long exp10 = std::stoll(exponent) - static_cast<long long>(frac);
    if (exp10 > 4000 || exp10 < -4000) throw Invalid{};
    Int n(digits);
    Int scale = mp::pow(Int(10), static_cast<unsigned>(exp10 < 0 ? -exp10 : exp10));
    return exp10 < 0 ? Rational(n, scale) : Rational(n * scale);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int depth_ = 0;
};

std::string strip_fraction_zeros(std::string s) {
  if (s.find('.') == std::string::npos) return s;
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  if (s == "-0") s = "0";
  return s;
}

bool terminating(Int den) {
  while (den % 2 == 0) den /= 2;
  while (den % 5 == 0) den /= 5;
  return den == 1;
}

// Integers print as integers; terminating fractions print exactly; other
// values are rounded half away from zero to 10 decimal places.
std::string render(const Value& v) {
  if (const auto* f = std::get_if<long double>(&v)) {
    if (!std::isfinite(*f)) throw Invalid{};
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(kFractionDigits);
    os << *f;
    return strip_fraction_zeros(os.str());
  }
  const auto& r = std::get<Rational>(v);
  const Int num = mp::numerator(r);
  const Int den = mp::denominator(r);
  if (den == 1) return num.str();

  const bool negative = num < 0;
  const Int mag = mp::abs(num);
  std::size_t places = kFractionDigits;
  Int scaled;
  if (terminating(den)) {
    places = 0;
    Int scale = 1;
    while (scale % den != 0) {
      scale *= 10;
      ++places;
    }
    scaled = mag * (scale / den);
  } else {
    Int scale = mp::pow(Int(10), kFractionDigits);
    scaled = (mag * scale * 2 + den) / (den * 2);
  }
  std::string digits = scaled.str();
  if (digits.size() <= places) digits = std::string(places - digits.size() + 1, '0') + digits;
  std::string out = digits.substr(0, digits.size() - places) + "." + digits.substr(digits.size() - places);
  out = strip_fraction_zeros(out);
  return negative && out != "0" ? "-" + out : out;
}

}  // namespace

std::string clean(std::string_view expr) {
  std::string s;
  s.reserve(expr.size());
  for (char c : expr) {
    if (c == '^') {
      s += "**";
    } else if (c != '$') {
      s += c;
    }
  }

  static const std::regex thousands(R"((\d),(\d{3})(?!\d))");
  for (std::string prev; prev != s;) {
    prev = s;
    s = std::regex_replace(s, thousands, "$1$2");
  }

  std::string no_percent;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i > 0 && (std::isdigit(static_cast<unsigned char>(s[i - 1])) || s[i - 1] == ')' || s[i - 1] == '.')) {
      std::size_t j = i + 1;
      while (j < s.size() && std::isspace(static_cast<unsigned char>(s[j]))) ++j;
      if (j == s.size() || s[j] == ')') continue;
    }
    no_percent += s[i];
  }

  std::string out;
  bool pending_space = false;
  for (char c : no_percent) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += c;
  }
  return out;
}

std::optional<std::string> evaluate(std::string_view expr) {
  try {
    if (expr.find_first_not_of(" \t\n") == std::string_view::npos) return std::nullopt;
    return render(Parser(expr).parse());
  } catch (const Invalid&) {
    return std::nullopt;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace pdlopt::calc
