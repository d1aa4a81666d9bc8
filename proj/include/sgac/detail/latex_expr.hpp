#pragma once

// A closed LaTeX subset used by the answer checker:
//   integers, decimals, a/b, \frac{.}{.} (and \dfrac, \tfrac), \sqrt{.},
//   unary +/-, + - * / ^, \cdot, \times, \div, implicit multiplication,
//   ( ) [ ] { } grouping, single-letter symbols, \pi and lowercase greek.
// Anything else makes the parse fail; callers treat failure as "no match".

#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sgac/detail/rational.hpp"

namespace sgac::detail {

struct Expr {
  enum class Kind { Number, Symbol, Add, Mul, Neg, Div, Pow, Sqrt };
  Kind kind;
  std::string text;  // literal digits for Number, name for Symbol
  std::vector<Expr> args;
};

class LatexParser {
 public:
  static constexpr int kMaxDepth = 512;  // recursion frames, a few per bracket level

  static std::optional<Expr> parse(std::string_view src) {
    LatexParser p(src);
    try {
      auto e = p.parse_sum();
      p.skip_space();
      if (!p.at_end()) return std::nullopt;
      return e;
    } catch (const ParseError&) {
      return std::nullopt;
    }
  }

 private:
  struct ParseError {};

  explicit LatexParser(std::string_view s) : src_(s) {}

  bool at_end() const { return pos_ >= src_.size(); }
  char peek() const { return at_end() ? '\0' : src_[pos_]; }

  [[noreturn]] static void fail() { throw ParseError{}; }

  void skip_space() {
    while (!at_end()) {
      const char c = src_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else if (c == '\\' && pos_ + 1 < src_.size() &&
                 (src_[pos_ + 1] == ',' || src_[pos_ + 1] == '!' || src_[pos_ + 1] == ';' ||
                  src_[pos_ + 1] == ':' || src_[pos_ + 1] == ' ')) {
        pos_ += 2;
      } else if (lookahead_command() == "left" || lookahead_command() == "right") {
        pos_ += 1 + lookahead_command().size();
      } else {
        break;
      }
    }
  }

  std::string_view lookahead_command() const {
    if (peek() != '\\') return {};
    std::size_t end = pos_ + 1;
    while (end < src_.size() && std::isalpha(static_cast<unsigned char>(src_[end]))) ++end;
    return src_.substr(pos_ + 1, end - pos_ - 1);
  }

  struct DepthGuard {
    explicit DepthGuard(int& d) : depth(d) {
      if (++depth > kMaxDepth) fail();
    }
    ~DepthGuard() { --depth; }
    int& depth;
  };

  static Expr binary(Expr::Kind k, Expr a, Expr b) {
    Expr e{k, {}, {}};
    e.args.push_back(std::move(a));
    e.args.push_back(std::move(b));
    return e;
  }

  Expr parse_sum() {
    DepthGuard guard(depth_);
    Expr lhs = parse_product();
    for (;;) {
      skip_space();
      const char c = peek();
      if (c == '+') {
        ++pos_;
        lhs = binary(Expr::Kind::Add, std::move(lhs), parse_product());
      } else if (c == '-') {
        ++pos_;
        Expr neg{Expr::Kind::Neg, {}, {}};
        neg.args.push_back(parse_product());
        lhs = binary(Expr::Kind::Add, std::move(lhs), std::move(neg));
      } else {
        return lhs;
      }
    }
  }

  bool starts_operand() {
    skip_space();
    const char c = peek();
    if (std::isdigit(static_cast<unsigned char>(c)) || std::isalpha(static_cast<unsigned char>(c))) return true;
    if (c == '.' && pos_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1]))) return true;
    if (c == '(' || c == '[' || c == '{') return true;
    if (c == '\\') {
      const auto cmd = lookahead_command();
      return cmd == "frac" || cmd == "dfrac" || cmd == "tfrac" || cmd == "sqrt" || is_greek(cmd);
    }
    return false;
  }

  Expr parse_product() {
    DepthGuard guard(depth_);
    Expr lhs = parse_unary();
    for (;;) {
      skip_space();
      const char c = peek();
      const auto cmd = lookahead_command();
      if (c == '*') {
        ++pos_;
        lhs = binary(Expr::Kind::Mul, std::move(lhs), parse_unary());
      } else if (cmd == "cdot" || cmd == "times") {
        pos_ += 1 + cmd.size();
        lhs = binary(Expr::Kind::Mul, std::move(lhs), parse_unary());
      } else if (c == '/') {
        ++pos_;
        lhs = binary(Expr::Kind::Div, std::move(lhs), parse_unary());
      } else if (cmd == "div") {
        pos_ += 1 + cmd.size();
        lhs = binary(Expr::Kind::Div, std::move(lhs), parse_unary());
      } else if (starts_operand()) {
        lhs = binary(Expr::Kind::Mul, std::move(lhs), parse_power());
      } else {
        return lhs;
      }
    }
  }

  Expr parse_unary() {
    DepthGuard guard(depth_);
    skip_space();
    if (peek() == '-') {
      ++pos_;
      Expr e{Expr::Kind::Neg, {}, {}};
      e.args.push_back(parse_unary());
      return e;
    }
    if (peek() == '+') {
      ++pos_;
      return parse_unary();
    }
    return parse_power();
  }

  Expr parse_power() {
    DepthGuard guard(depth_);
    Expr base = parse_atom();
    skip_space();
    if (peek() == '^') {
      ++pos_;
      skip_space();
      Expr exponent = parse_script_arg();
      return binary(Expr::Kind::Pow, std::move(base), std::move(exponent));
    }
    return base;
  }

  // Argument of ^, \frac, \sqrt: a braced group or a single character/token.
  Expr parse_script_arg() {
    DepthGuard guard(depth_);
    skip_space();
    const char c = peek();
    if (c == '{') {
      ++pos_;
      Expr e = parse_sum();
      skip_space();
      if (peek() != '}') fail();
      ++pos_;
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      ++pos_;
      return Expr{Expr::Kind::Number, std::string(1, c), {}};
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      ++pos_;
      return Expr{Expr::Kind::Symbol, std::string(1, c), {}};
    }
    if (c == '-') {
      // x^-1 is common shorthand
      ++pos_;
      Expr e{Expr::Kind::Neg, {}, {}};
      e.args.push_back(parse_script_arg());
      return e;
    }
    if (c == '\\') {
      const auto cmd = lookahead_command();
      if (is_greek(cmd)) {
        pos_ += 1 + cmd.size();
        return Expr{Expr::Kind::Symbol, "\\" + std::string(cmd), {}};
      }
    }
    fail();
  }

  Expr parse_group(char open, char close) {
    ++pos_;
    (void)open;
    Expr e = parse_sum();
    skip_space();
    if (peek() != close) fail();
    ++pos_;
    return e;
  }

  Expr parse_atom() {
    DepthGuard guard(depth_);
    skip_space();
    const char c = peek();
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const std::size_t start = pos_;
      while (std::isdigit(static_cast<unsigned char>(peek()))) ++pos_;
      if (peek() == '.') {
        ++pos_;
        while (std::isdigit(static_cast<unsigned char>(peek()))) ++pos_;
      }
      std::string digits(src_.substr(start, pos_ - start));
      if (digits == ".") fail();
      return Expr{Expr::Kind::Number, std::move(digits), {}};
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      ++pos_;
      return Expr{Expr::Kind::Symbol, std::string(1, c), {}};
    }
    if (c == '(') return parse_group('(', ')');
    if (c == '[') return parse_group('[', ']');
    if (c == '{') return parse_group('{', '}');
    if (c == '\\') {
      const auto cmd = lookahead_command();
      if (cmd == "frac" || cmd == "dfrac" || cmd == "tfrac") {
        pos_ += 1 + cmd.size();
        Expr num = parse_script_arg();
        Expr den = parse_script_arg();
        return binary(Expr::Kind::Div, std::move(num), std::move(den));
      }
      if (cmd == "sqrt") {
        pos_ += 1 + cmd.size();
        skip_space();
        if (peek() == '[') fail();  // n-th roots are outside the subset
        Expr e{Expr::Kind::Sqrt, {}, {}};
        e.args.push_back(parse_script_arg());
        return e;
      }
      if (is_greek(cmd)) {
        pos_ += 1 + cmd.size();
        return Expr{Expr::Kind::Symbol, "\\" + std::string(cmd), {}};
      }
    }
    fail();
  }

  static bool is_greek(std::string_view cmd) {
    static constexpr std::string_view names[] = {
        "pi", "alpha", "beta", "gamma", "delta", "epsilon", "theta", "lambda",
        "mu", "phi", "psi", "omega", "sigma", "tau", "rho", "eta", "xi", "zeta", "kappa", "nu", "chi"};
    for (auto n : names) {
      if (cmd == n) return true;
    }
    return false;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int depth_ = 0;
};

// ---------------------------------------------------------------------------
// Numeric evaluation: exact rationals where possible, doubles otherwise.

using Number = std::variant<Rational, double>;

inline double as_double(const Number& n) {
  return std::holds_alternative<Rational>(n) ? std::get<Rational>(n).to_double() : std::get<double>(n);
}

/// Parses an unsigned decimal literal ("12", "0.25", "3.") exactly.
inline std::optional<Rational> decimal_to_rational(std::string_view digits) {
  try {
    Rational value(0);
    std::int64_t scale = 1;
    bool after_point = false;
    std::int64_t mantissa = 0;
    for (char c : digits) {
      if (c == '.') {
        after_point = true;
        continue;
      }
      mantissa = checked_add(checked_mul(mantissa, 10), c - '0');
      if (after_point) scale = checked_mul(scale, 10);
    }
    value = Rational(mantissa, scale);
    return value;
  } catch (const RationalOverflow&) {
    return std::nullopt;
  }
}

inline std::optional<Number> evaluate_numeric(const Expr& e) {
  using K = Expr::Kind;
  auto lift = [](auto&& op, const Number& a, const Number& b) -> std::optional<Number> {
    if (std::holds_alternative<Rational>(a) && std::holds_alternative<Rational>(b)) {
      try {
        return Number{op(std::get<Rational>(a), std::get<Rational>(b))};
      } catch (const RationalOverflow&) {
        // fall through to floating point
      }
    }
    const double r = op(as_double(a), as_double(b));
    if (!std::isfinite(r)) return std::nullopt;
    return Number{r};
  };
  switch (e.kind) {
    case K::Number: {
      if (auto r = decimal_to_rational(e.text)) return Number{*r};
      const double d = std::strtod(e.text.c_str(), nullptr);
      if (!std::isfinite(d)) return std::nullopt;
      return Number{d};
    }
    case K::Symbol:
      return std::nullopt;
    case K::Neg: {
      auto a = evaluate_numeric(e.args[0]);
      if (!a) return std::nullopt;
      if (std::holds_alternative<Rational>(*a)) {
        try {
          return Number{-std::get<Rational>(*a)};
        } catch (const RationalOverflow&) {
        }
      }
      return Number{-as_double(*a)};
    }
    case K::Add:
    case K::Mul:
    case K::Div: {
      auto a = evaluate_numeric(e.args[0]);
      auto b = evaluate_numeric(e.args[1]);
      if (!a || !b) return std::nullopt;
      if (e.kind == K::Add) return lift([](auto x, auto y) { return x + y; }, *a, *b);
      if (e.kind == K::Mul) return lift([](auto x, auto y) { return x * y; }, *a, *b);
      if (as_double(*b) == 0.0) return std::nullopt;
      return lift([](auto x, auto y) { return x / y; }, *a, *b);
    }
    case K::Pow: {
      auto base = evaluate_numeric(e.args[0]);
      auto ex = evaluate_numeric(e.args[1]);
      if (!base || !ex) return std::nullopt;
      if (std::holds_alternative<Rational>(*base) && std::holds_alternative<Rational>(*ex)) {
        const auto& r = std::get<Rational>(*ex);
        if (r.is_integer() && r.num() >= -64 && r.num() <= 64) {
          const auto& b = std::get<Rational>(*base);
          if (b.is_zero() && r.num() < 0) return std::nullopt;
          try {
            return Number{b.pow(r.num())};
          } catch (const RationalOverflow&) {
          }
        }
      }
      const double v = std::pow(as_double(*base), as_double(*ex));
      if (!std::isfinite(v)) return std::nullopt;
      return Number{v};
    }
    case K::Sqrt: {
      auto a = evaluate_numeric(e.args[0]);
      if (!a) return std::nullopt;
      if (std::holds_alternative<Rational>(*a)) {
        if (auto root = std::get<Rational>(*a).exact_sqrt()) return Number{*root};
      }
      const double v = as_double(*a);
      if (v < 0) return std::nullopt;
      return Number{std::sqrt(v)};
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Canonical form: rational functions over named symbols, compared by
// cross-multiplying expanded polynomials.

using Monomial = std::map<std::string, std::int64_t>;  // symbol -> positive power

class Polynomial {
 public:
  static constexpr std::size_t kMaxTerms = 4096;

  Polynomial() = default;
  explicit Polynomial(Rational c) {
    if (!c.is_zero()) terms_[Monomial{}] = c;
  }
  static Polynomial symbol(const std::string& name) {
    Polynomial p;
    p.terms_[Monomial{{name, 1}}] = Rational(1);
    return p;
  }

  bool is_zero() const { return terms_.empty(); }
  std::optional<Rational> constant_value() const {
    if (terms_.empty()) return Rational(0);
    if (terms_.size() == 1 && terms_.begin()->first.empty()) return terms_.begin()->second;
    return std::nullopt;
  }

  friend Polynomial operator+(const Polynomial& a, const Polynomial& b) {
    Polynomial r = a;
    for (const auto& [m, c] : b.terms_) r.accumulate(m, c);
    r.check_size();
    return r;
  }
  Polynomial operator-() const {
    Polynomial r;
    for (const auto& [m, c] : terms_) r.terms_[m] = -c;
    return r;
  }
  friend Polynomial operator-(const Polynomial& a, const Polynomial& b) { return a + (-b); }
  friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
    if (a.terms_.size() * b.terms_.size() > kMaxTerms * 4) throw RationalOverflow{};
    Polynomial r;
    for (const auto& [ma, ca] : a.terms_) {
      for (const auto& [mb, cb] : b.terms_) {
        Monomial m = ma;
        for (const auto& [sym, pw] : mb) m[sym] = checked_add(m[sym], pw);
        r.accumulate(m, ca * cb);
      }
    }
    r.check_size();
    return r;
  }

  friend bool operator==(const Polynomial&, const Polynomial&) = default;

  std::string str() const {
    if (terms_.empty()) return "0";
    std::string out;
    for (const auto& [m, c] : terms_) {
      if (!out.empty()) out += "+";
      out += "(" + c.str() + ")";
      for (const auto& [sym, pw] : m) out += "*" + sym + "^" + std::to_string(pw);
    }
    return out;
  }

 private:
  void accumulate(const Monomial& m, const Rational& c) {
    auto it = terms_.find(m);
    if (it == terms_.end()) {
      if (!c.is_zero()) terms_.emplace(m, c);
      return;
    }
    it->second = it->second + c;
    if (it->second.is_zero()) terms_.erase(it);
  }
  void check_size() const {
    if (terms_.size() > kMaxTerms) throw RationalOverflow{};
  }

  std::map<Monomial, Rational> terms_;
};

struct RationalFunction {
  Polynomial num;
  Polynomial den{Rational(1)};

  friend RationalFunction operator+(const RationalFunction& a, const RationalFunction& b) {
    if (a.den == b.den) return {a.num + b.num, a.den};
    return {a.num * b.den + b.num * a.den, a.den * b.den};
  }
  friend RationalFunction operator*(const RationalFunction& a, const RationalFunction& b) {
    return {a.num * b.num, a.den * b.den};
  }
  RationalFunction operator-() const { return {-num, den}; }
  std::optional<RationalFunction> reciprocal() const {
    if (num.is_zero()) return std::nullopt;
    return RationalFunction{den, num};
  }
  std::optional<Rational> constant_value() const {
    auto n = num.constant_value();
    auto d = den.constant_value();
    if (!n || !d || d->is_zero()) return std::nullopt;
    return *n / *d;
  }
  std::string str() const { return "[" + num.str() + "]/[" + den.str() + "]"; }
};

/// Pulls square factors out of a positive integer: n = outside^2 * inside.
inline std::pair<std::int64_t, std::int64_t> split_square_factor(std::int64_t n) {
  std::int64_t outside = 1;
  std::int64_t inside = n;
  for (std::int64_t f = 2; f <= 1'000'000 && f * f <= inside; ++f) {
    while (inside % (f * f) == 0) {
      inside /= f * f;
      outside *= f;
    }
  }
  return {outside, inside};
}

inline std::optional<RationalFunction> canonicalize(const Expr& e);

inline std::optional<RationalFunction> canonical_sqrt(const RationalFunction& arg) {
  if (auto c = arg.constant_value()) {
    if (c->num() < 0) return std::nullopt;
    if (auto root = c->exact_sqrt()) return RationalFunction{Polynomial(*root)};
    // sqrt(p/q) = sqrt(p*q)/q, then pull square factors out of p*q.
    const std::int64_t pq = checked_mul(c->num(), c->den());
    const auto [outside, inside] = split_square_factor(pq);
    Polynomial radical = Polynomial::symbol("\\sqrt{" + std::to_string(inside) + "}");
    return RationalFunction{radical * Polynomial(Rational(outside, c->den()))};
  }
  return RationalFunction{Polynomial::symbol("\\sqrt{" + arg.str() + "}")};
}

inline std::optional<RationalFunction> canonicalize(const Expr& e) {
  using K = Expr::Kind;
  try {
    switch (e.kind) {
      case K::Number: {
        auto r = decimal_to_rational(e.text);
        if (!r) return std::nullopt;
        return RationalFunction{Polynomial(*r)};
      }
      case K::Symbol:
        return RationalFunction{Polynomial::symbol(e.text)};
      case K::Neg: {
        auto a = canonicalize(e.args[0]);
        if (!a) return std::nullopt;
        return -*a;
      }
      case K::Add:
      case K::Mul:
      case K::Div: {
        auto a = canonicalize(e.args[0]);
        auto b = canonicalize(e.args[1]);
        if (!a || !b) return std::nullopt;
        if (e.kind == K::Add) return *a + *b;
        if (e.kind == K::Mul) return *a * *b;
        auto inv = b->reciprocal();
        if (!inv) return std::nullopt;
        return *a * *inv;
      }
      case K::Pow: {
        auto base = canonicalize(e.args[0]);
        auto ex = canonicalize(e.args[1]);
        if (!base || !ex) return std::nullopt;
        auto k = ex->constant_value();
        if (!k) return std::nullopt;
        if (k->den() == 2 && k->num() > 0 && k->num() <= 64) {
          // x^{n/2} = sqrt(x)^n
          auto root = canonical_sqrt(*base);
          if (!root) return std::nullopt;
          RationalFunction out{Polynomial(Rational(1))};
          for (std::int64_t i = 0; i < k->num(); ++i) out = out * *root;
          return out;
        }
        if (!k->is_integer() || k->num() > 64 || k->num() < -64) return std::nullopt;
        RationalFunction b = *base;
        if (k->num() < 0) {
          auto inv = b.reciprocal();
          if (!inv) return std::nullopt;
          b = *inv;
        }
        RationalFunction out{Polynomial(Rational(1))};
        for (std::int64_t i = 0; i < std::abs(k->num()); ++i) out = out * b;
        return out;
      }
      case K::Sqrt: {
        auto a = canonicalize(e.args[0]);
        if (!a) return std::nullopt;
        return canonical_sqrt(*a);
      }
    }
  } catch (const RationalOverflow&) {
    return std::nullopt;
  } catch (const std::domain_error&) {
    return std::nullopt;
  }
  return std::nullopt;
}

/// True when a and b denote the same rational function.
inline bool canonical_equal(const RationalFunction& a, const RationalFunction& b) {
  try {
    return (a.num * b.den - b.num * a.den).is_zero();
  } catch (const RationalOverflow&) {
    return false;
  }
}

}  // namespace sgac::detail
