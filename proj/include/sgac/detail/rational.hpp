#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>

namespace sgac::detail {

/// Thrown when exact arithmetic leaves the int64 range. Callers treat it as
/// "not representable" and fall back to floating point or give up.
struct RationalOverflow : std::overflow_error {
  RationalOverflow() : std::overflow_error("rational overflow") {}
};

inline std::int64_t checked_mul(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_mul_overflow(a, b, &r)) throw RationalOverflow{};
  return r;
}

inline std::int64_t checked_add(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_add_overflow(a, b, &r)) throw RationalOverflow{};
  return r;
}

/// Exact rational with int64 numerator/denominator, always reduced and with a
/// positive denominator.
class Rational {
 public:
  constexpr Rational() = default;
  Rational(std::int64_t n) : num_(n), den_(1) {}  // NOLINT(google-explicit-constructor)
  Rational(std::int64_t n, std::int64_t d) : num_(n), den_(d) {
    if (d == 0) throw std::domain_error("rational with zero denominator");
    normalize();
  }

  std::int64_t num() const noexcept { return num_; }
  std::int64_t den() const noexcept { return den_; }
  bool is_zero() const noexcept { return num_ == 0; }
  bool is_integer() const noexcept { return den_ == 1; }
  double to_double() const noexcept { return static_cast<double>(num_) / static_cast<double>(den_); }

  Rational operator-() const {
    if (num_ == INT64_MIN) throw RationalOverflow{};
    return Rational(-num_, den_, raw_tag{});
  }

  friend Rational operator+(const Rational& a, const Rational& b) {
    const std::int64_t g = std::gcd(a.den_, b.den_);
    const std::int64_t da = a.den_ / g;
    const std::int64_t db = b.den_ / g;
    return Rational(checked_add(checked_mul(a.num_, db), checked_mul(b.num_, da)), checked_mul(a.den_, db));
  }
  friend Rational operator-(const Rational& a, const Rational& b) { return a + (-b); }
  friend Rational operator*(const Rational& a, const Rational& b) {
    const std::int64_t g1 = std::gcd(a.num_, b.den_);
    const std::int64_t g2 = std::gcd(b.num_, a.den_);
    const std::int64_t n1 = g1 ? a.num_ / g1 : a.num_;
    const std::int64_t d2 = g1 ? b.den_ / g1 : b.den_;
    const std::int64_t n2 = g2 ? b.num_ / g2 : b.num_;
    const std::int64_t d1 = g2 ? a.den_ / g2 : a.den_;
    return Rational(checked_mul(n1, n2), checked_mul(d1, d2));
  }
  friend Rational operator/(const Rational& a, const Rational& b) {
    if (b.num_ == 0) throw std::domain_error("rational division by zero");
    return a * b.reciprocal();
  }

  Rational reciprocal() const {
    if (num_ == 0) throw std::domain_error("reciprocal of zero");
    return Rational(den_, num_);
  }

  Rational pow(std::int64_t e) const {
    if (e < 0) return reciprocal().pow(-e);
    Rational result(1);
    Rational base = *this;
    while (e > 0) {
      if (e & 1) result = result * base;
      e >>= 1;
      if (e) base = base * base;
    }
    return result;
  }

  /// Exact square root when both parts are perfect squares.
  std::optional<Rational> exact_sqrt() const {
    if (num_ < 0) return std::nullopt;
    auto root = [](std::int64_t v) -> std::optional<std::int64_t> {
      auto r = static_cast<std::int64_t>(std::sqrt(static_cast<long double>(v)));
      while (r > 0 && static_cast<__int128>(r) * r > v) --r;
      while (static_cast<__int128>(r + 1) * (r + 1) <= v) ++r;
      if (r * r == v) return r;
      return std::nullopt;
    };
    auto n = root(num_);
    auto d = root(den_);
    if (!n || !d) return std::nullopt;
    return Rational(*n, *d);
  }

  friend bool operator==(const Rational&, const Rational&) = default;
  friend std::strong_ordering operator<=>(const Rational& a, const Rational& b) {
    // 128-bit cross products are exact for any int64 operands.
    const __int128 lhs = static_cast<__int128>(a.num_) * b.den_;
    const __int128 rhs = static_cast<__int128>(b.num_) * a.den_;
    if (lhs < rhs) return std::strong_ordering::less;
    if (lhs > rhs) return std::strong_ordering::greater;
    return std::strong_ordering::equal;
  }

  std::string str() const {
    return den_ == 1 ? std::to_string(num_) : std::to_string(num_) + "/" + std::to_string(den_);
  }

 private:
  struct raw_tag {};
  Rational(std::int64_t n, std::int64_t d, raw_tag) : num_(n), den_(d) {}

  void normalize() {
    if (den_ < 0) {
      if (num_ == INT64_MIN || den_ == INT64_MIN) throw RationalOverflow{};
      num_ = -num_;
      den_ = -den_;
    }
    const std::int64_t g = std::gcd(num_, den_);
    if (g > 1) {
      num_ /= g;
      den_ /= g;
    }
    if (num_ == 0) den_ = 1;
  }

  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

}  // namespace sgac::detail
