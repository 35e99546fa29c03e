#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <gmpxx.h>

namespace cdgamma {

using Rational = mpq_class;

inline constexpr std::size_t kMaxVars = 16;
inline constexpr int kDefaultDegreeCap = 12;

class DegreeOverflow : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ArityMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ParseError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Monomial {
  std::array<std::uint8_t, kMaxVars> e{};
  int degree() const;
  bool operator==(const Monomial&) const = default;
};

// Graded lexicographic: total degree first, then larger exponent of the
// earlier variable wins.
struct GrlexLess {
  bool operator()(const Monomial& a, const Monomial& b) const;
};

class PolyExpr {
 public:
  using TermMap = std::map<Monomial, Rational, GrlexLess>;

  PolyExpr() = default;
  explicit PolyExpr(std::size_t arity);

  static PolyExpr constant(std::size_t arity, const Rational& c);
  static PolyExpr variable(std::size_t arity, std::size_t i);
  static PolyExpr term(std::size_t arity, const Monomial& m, const Rational& c);

  std::size_t arity() const { return arity_; }
  const TermMap& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  bool is_constant() const;
  int degree() const;
  Rational coeff(const Monomial& m) const;

  PolyExpr operator-() const;
  PolyExpr& operator+=(const PolyExpr& o);
  PolyExpr& operator-=(const PolyExpr& o);
  PolyExpr& operator*=(const Rational& c);

  friend PolyExpr operator+(PolyExpr a, const PolyExpr& b) { return a += b; }
  friend PolyExpr operator-(PolyExpr a, const PolyExpr& b) { return a -= b; }
  friend PolyExpr operator*(PolyExpr a, const Rational& c) { return a *= c; }
  friend PolyExpr operator*(const Rational& c, PolyExpr a) { return a *= c; }
  friend PolyExpr operator*(const PolyExpr& a, const PolyExpr& b) {
    return multiply(a, b);
  }
  bool operator==(const PolyExpr& o) const;

  // Throws DegreeOverflow when the product degree exceeds cap.
  static PolyExpr multiply(const PolyExpr& a, const PolyExpr& b,
                           int cap = kDefaultDegreeCap);

  PolyExpr diff(std::size_t i) const;
  PolyExpr pow(unsigned k) const;

  Rational eval(std::span<const Rational> x) const;
  double eval(std::span<const double> x) const;

  // Substitute polynomials (all of a common arity) for each variable.
  PolyExpr compose(std::span<const PolyExpr> subs) const;

 private:
  void check_arity(const PolyExpr& o) const;
  void add_term(const Monomial& m, const Rational& c);

  std::size_t arity_ = 0;
  TermMap terms_;
};

std::string to_string(const PolyExpr& p, const std::vector<std::string>& names);
std::string to_string(const Rational& q);

// Grammar: sums and products of rationals, names, parentheses, integer
// powers and division by nonzero constants.
PolyExpr parse_poly(std::string_view text, const std::vector<std::string>& names);

Rational parse_rational(std::string_view text);

}  // namespace cdgamma
