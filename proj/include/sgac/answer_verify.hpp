#pragma once

// Answer extraction and equivalence checking for model responses.
//
// Pipeline: take the last balanced \boxed{...} span, otherwise the last
// numeric literal in the text; normalize both sides; then try exact string
// equality, exact/near numeric equality, and canonical-form equality in that
// order. The first stage that succeeds is reported.

#include <cctype>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

#include "sgac/detail/latex_expr.hpp"

namespace sgac {

enum class ExtractionMethod { Boxed, LastNumber, None };
enum class MatchStage { ExactString, NumericEqual, SymbolicEqual, NoMatch };

inline constexpr std::string_view to_string(ExtractionMethod m) {
  switch (m) {
    case ExtractionMethod::Boxed: return "boxed";
    case ExtractionMethod::LastNumber: return "last_number";
    case ExtractionMethod::None: return "none";
  }
  return "none";
}

inline constexpr std::string_view to_string(MatchStage s) {
  switch (s) {
    case MatchStage::ExactString: return "exact_string";
    case MatchStage::NumericEqual: return "numeric_equal";
    case MatchStage::SymbolicEqual: return "symbolic_equal";
    case MatchStage::NoMatch: return "no_match";
  }
  return "no_match";
}

struct ExtractedAnswer {
  std::string raw_text;
  std::string normalized;
  ExtractionMethod method = ExtractionMethod::None;

  bool empty() const noexcept { return method == ExtractionMethod::None; }
};

struct VerifyResult {
  bool correct = false;
  MatchStage match_stage = MatchStage::NoMatch;
  bool format_ok = false;
};

/// Relative tolerance for answers that cannot be compared as exact rationals.
inline constexpr double kNumericRelTolerance = 1e-9;

/// Contents of the last balanced \boxed{...} span. Nested braces are kept
/// verbatim. Spans whose closing brace never arrives are skipped.
inline std::optional<std::string> extract_boxed(std::string_view response) {
  static constexpr std::string_view kOpen = "\\boxed{";
  std::optional<std::string> last;
  std::size_t from = 0;
  for (;;) {
    const std::size_t at = response.find(kOpen, from);
    if (at == std::string_view::npos) break;
    from = at + 1;
    const std::size_t body = at + kOpen.size();
    int depth = 1;
    std::size_t i = body;
    for (; i < response.size(); ++i) {
      const char c = response[i];
      if (c == '\\' && i + 1 < response.size() && (response[i + 1] == '{' || response[i + 1] == '}')) {
        ++i;  // escaped brace is literal text
        continue;
      }
      if (c == '{') {
        ++depth;
      } else if (c == '}') {
        if (--depth == 0) break;
      }
    }
    if (depth == 0) last = std::string(response.substr(body, i - body));
  }
  return last;
}

namespace detail {

inline bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
inline bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// Scans an unsigned decimal at `i`; returns one past its end (== i when none).
inline std::size_t scan_decimal(std::string_view s, std::size_t i) {
  const std::size_t start = i;
  while (i < s.size() && is_digit(s[i])) ++i;
  if (i == start) return start;
  // thousands groups: 1,234,567
  if (i - start <= 3) {
    std::size_t j = i;
    while (j + 3 < s.size() && s[j] == ',' && is_digit(s[j + 1]) && is_digit(s[j + 2]) &&
           is_digit(s[j + 3]) && (j + 4 >= s.size() || !is_digit(s[j + 4]))) {
      j += 4;
    }
    i = j;
  }
  if (i + 1 < s.size() && s[i] == '.' && is_digit(s[i + 1])) {
    ++i;
    while (i < s.size() && is_digit(s[i])) ++i;
  }
  return i;
}

}  // namespace detail

/// The last numeric literal in the text: optional leading minus, digits,
/// optional decimal part, optional "/digits" fraction tail. A minus sign is
/// only taken when it does not read as a binary operator: "5 - 3" and "x-3"
/// give 3, "is -0.5" gives -0.5. Thousands separators are removed.
inline std::optional<std::string> extract_last_number(std::string_view response) {
  std::optional<std::string> last;
  std::size_t i = 0;
  while (i < response.size()) {
    if (!detail::is_digit(response[i])) {
      ++i;
      continue;
    }
    std::size_t start = i;
    std::size_t end = detail::scan_decimal(response, i);
    if (end + 1 < response.size() && response[end] == '/' && detail::is_digit(response[end + 1])) {
      end = detail::scan_decimal(response, end + 1);
    }
    if (start > 0 && response[start - 1] == '-') {
      std::size_t k = start - 1;
      std::size_t p = k;
      while (p > 0 && response[p - 1] == ' ') --p;
      const bool adjacent_letter = p == k && k > 0 && detail::is_alnum(response[k - 1]);
      const bool binary = p > 0 && (adjacent_letter || detail::is_digit(response[p - 1]) || response[p - 1] == ')' ||
                                    response[p - 1] == ']' || response[p - 1] == '}');
      if (!binary) start = k;
    }
    std::string token;
    for (std::size_t j = start; j < end; ++j) {
      if (response[j] != ',') token.push_back(response[j]);
    }
    last = std::move(token);
    i = end;
  }
  return last;
}

namespace detail {

inline bool replace_all(std::string& s, std::string_view from, std::string_view to) {
  bool changed = false;
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
    changed = true;
  }
  return changed;
}

// Removes \left / \right when used as delimiter sizing (not \leftarrow etc.).
inline bool strip_sizing(std::string& s, std::string_view cmd) {
  bool changed = false;
  std::size_t pos = 0;
  while ((pos = s.find(cmd, pos)) != std::string::npos) {
    const std::size_t after = pos + cmd.size();
    if (after < s.size() && std::isalpha(static_cast<unsigned char>(s[after]))) {
      pos = after;
      continue;
    }
    s.erase(pos, cmd.size());
    changed = true;
  }
  return changed;
}

inline std::string collapse_whitespace(std::string_view in) {
  std::string out;
  out.reserve(in.size());
  bool pending_space = false;
  for (char c : in) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

inline std::string normalize_once(std::string s) {
  replace_all(s, "\\dfrac", "\\frac");
  replace_all(s, "\\tfrac", "\\frac");
  strip_sizing(s, "\\left");
  strip_sizing(s, "\\right");
  s = collapse_whitespace(s);
  if (s.size() >= 2 && s.front() == '$' && s.back() == '$') {
    s = s.substr(1, s.size() - 2);
    s = collapse_whitespace(s);
  }
  while (!s.empty() && s.back() == '.') s.pop_back();
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

}  // namespace detail

/// Canonical surface form of an extracted answer. Idempotent.
inline std::string normalize_answer(std::string_view raw) {
  std::string current(raw);
  for (;;) {
    std::string next = detail::normalize_once(current);
    if (next == current) return next;
    current = std::move(next);
  }
}

/// Compares two normalized answers: exact string, then numeric value, then
/// canonical rational-function form. Unparseable input never matches past
/// stage one.
inline std::pair<bool, MatchStage> check_equivalence(std::string_view a, std::string_view b) {
  if (a == b) return {true, MatchStage::ExactString};
  const auto ea = detail::LatexParser::parse(a);
  const auto eb = detail::LatexParser::parse(b);
  if (!ea || !eb) return {false, MatchStage::NoMatch};

  const auto na = detail::evaluate_numeric(*ea);
  const auto nb = detail::evaluate_numeric(*eb);
  if (na && nb) {
    using detail::Rational;
    if (std::holds_alternative<Rational>(*na) && std::holds_alternative<Rational>(*nb)) {
      if (std::get<Rational>(*na) == std::get<Rational>(*nb)) return {true, MatchStage::NumericEqual};
    } else {
      const double x = detail::as_double(*na);
      const double y = detail::as_double(*nb);
      if (x == y || std::abs(x - y) <= kNumericRelTolerance * std::max(std::abs(x), std::abs(y))) {
        return {true, MatchStage::NumericEqual};
      }
    }
  }

  const auto ca = detail::canonicalize(*ea);
  const auto cb = detail::canonicalize(*eb);
  if (ca && cb && detail::canonical_equal(*ca, *cb)) return {true, MatchStage::SymbolicEqual};
  return {false, MatchStage::NoMatch};
}

/// Boxed span if present and non-blank, else the last number, normalized.
inline ExtractedAnswer extract_answer(std::string_view response) {
  if (auto boxed = extract_boxed(response)) {
    std::string normalized = normalize_answer(*boxed);
    if (!normalized.empty()) return {std::move(*boxed), std::move(normalized), ExtractionMethod::Boxed};
  }
  if (auto number = extract_last_number(response)) {
    std::string normalized = normalize_answer(*number);
    return {std::move(*number), std::move(normalized), ExtractionMethod::LastNumber};
  }
  return {};
}

inline VerifyResult verify_extracted(const ExtractedAnswer& answer, bool format_ok, std::string_view ground_truth) {
  VerifyResult result;
  result.format_ok = format_ok;
  if (answer.empty()) return result;
  const auto [ok, stage] = check_equivalence(answer.normalized, normalize_answer(ground_truth));
  result.correct = ok;
  result.match_stage = stage;
  return result;
}

inline bool has_boxed_span(std::string_view response) { return extract_boxed(response).has_value(); }

inline VerifyResult verify_response(std::string_view response, std::string_view ground_truth) {
  if (ground_truth.empty()) throw std::invalid_argument("verify_response: ground truth must be non-empty");
  return verify_extracted(extract_answer(response), has_boxed_span(response), ground_truth);
}

}  // namespace sgac
