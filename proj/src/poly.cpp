#include "cdgamma/poly.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace cdgamma {

int Monomial::degree() const {
  int d = 0;
  for (auto v : e) d += v;
  return d;
}

bool GrlexLess::operator()(const Monomial& a, const Monomial& b) const {
  const int da = a.degree(), db = b.degree();
  if (da != db) return da < db;
  for (std::size_t i = 0; i < kMaxVars; ++i) {
    if (a.e[i] != b.e[i]) return a.e[i] < b.e[i];
  }
  return false;
}

PolyExpr::PolyExpr(std::size_t arity) : arity_(arity) {
  if (arity > kMaxVars) {
    throw std::invalid_argument("PolyExpr: arity " + std::to_string(arity) +
                                " exceeds " + std::to_string(kMaxVars));
  }
}

PolyExpr PolyExpr::constant(std::size_t arity, const Rational& c) {
  PolyExpr p(arity);
  p.add_term(Monomial{}, c);
  return p;
}

PolyExpr PolyExpr::variable(std::size_t arity, std::size_t i) {
  if (i >= arity) throw std::out_of_range("PolyExpr::variable: index out of range");
  Monomial m;
  m.e[i] = 1;
  return term(arity, m, 1);
}

PolyExpr PolyExpr::term(std::size_t arity, const Monomial& m, const Rational& c) {
  PolyExpr p(arity);
  for (std::size_t i = arity; i < kMaxVars; ++i) {
    if (m.e[i] != 0) throw std::invalid_argument("PolyExpr::term: exponent beyond arity");
  }
  p.add_term(m, c);
  return p;
}

bool PolyExpr::is_constant() const {
  return terms_.empty() || (terms_.size() == 1 && terms_.begin()->first.degree() == 0);
}

int PolyExpr::degree() const {
  if (terms_.empty()) return -1;
  return terms_.rbegin()->first.degree();
}

Rational PolyExpr::coeff(const Monomial& m) const {
  auto it = terms_.find(m);
  return it == terms_.end() ? Rational(0) : it->second;
}

void PolyExpr::check_arity(const PolyExpr& o) const {
  if (arity_ != o.arity_) {
    throw ArityMismatch("PolyExpr: arity " + std::to_string(arity_) + " vs " +
                        std::to_string(o.arity_));
  }
}

void PolyExpr::add_term(const Monomial& m, const Rational& c) {
  if (c == 0) return;
  auto [it, inserted] = terms_.try_emplace(m, c);
  if (!inserted) {
    it->second += c;
    if (it->second == 0) terms_.erase(it);
  }
}

PolyExpr PolyExpr::operator-() const {
  PolyExpr r = *this;
  for (auto& [m, c] : r.terms_) c = -c;
  return r;
}

PolyExpr& PolyExpr::operator+=(const PolyExpr& o) {
  check_arity(o);
  for (const auto& [m, c] : o.terms_) add_term(m, c);
  return *this;
}

PolyExpr& PolyExpr::operator-=(const PolyExpr& o) {
  check_arity(o);
  for (const auto& [m, c] : o.terms_) add_term(m, -c);
  return *this;
}

PolyExpr& PolyExpr::operator*=(const Rational& c) {
  if (c == 0) {
    terms_.clear();
    return *this;
  }
  for (auto& [m, v] : terms_) v *= c;
  return *this;
}

bool PolyExpr::operator==(const PolyExpr& o) const {
  return arity_ == o.arity_ && terms_ == o.terms_;
}

PolyExpr PolyExpr::multiply(const PolyExpr& a, const PolyExpr& b, int cap) {
  a.check_arity(b);
  PolyExpr r(a.arity_);
  if (a.is_zero() || b.is_zero()) return r;
  if (a.degree() + b.degree() > cap) {
    throw DegreeOverflow("PolyExpr: product degree " +
                         std::to_string(a.degree() + b.degree()) +
                         " exceeds cap " + std::to_string(cap));
  }
  Rational prod;
  for (const auto& [ma, ca] : a.terms_) {
    for (const auto& [mb, cb] : b.terms_) {
      Monomial m;
      for (std::size_t i = 0; i < a.arity_; ++i) m.e[i] = ma.e[i] + mb.e[i];
      prod = ca * cb;
      r.add_term(m, prod);
    }
  }
  return r;
}

PolyExpr PolyExpr::diff(std::size_t i) const {
  if (i >= arity_) throw std::out_of_range("PolyExpr::diff: index out of range");
  PolyExpr r(arity_);
  for (const auto& [m, c] : terms_) {
    if (m.e[i] == 0) continue;
    Monomial d = m;
    --d.e[i];
    r.terms_.emplace(d, c * m.e[i]);
  }
  return r;
}

PolyExpr PolyExpr::pow(unsigned k) const {
  PolyExpr r = constant(arity_, 1);
  for (unsigned j = 0; j < k; ++j) r = r * *this;
  return r;
}

Rational PolyExpr::eval(std::span<const Rational> x) const {
  if (x.size() != arity_) throw ArityMismatch("PolyExpr::eval: point dimension");
  Rational s = 0, t;
  for (const auto& [m, c] : terms_) {
    t = c;
    for (std::size_t i = 0; i < arity_; ++i) {
      for (int k = 0; k < m.e[i]; ++k) t *= x[i];
    }
    s += t;
  }
  return s;
}

double PolyExpr::eval(std::span<const double> x) const {
  if (x.size() != arity_) throw ArityMismatch("PolyExpr::eval: point dimension");
  double s = 0.0;
  for (const auto& [m, c] : terms_) {
    double t = c.get_d();
    for (std::size_t i = 0; i < arity_; ++i) {
      for (int k = 0; k < m.e[i]; ++k) t *= x[i];
    }
    s += t;
  }
  return s;
}

PolyExpr PolyExpr::compose(std::span<const PolyExpr> subs) const {
  if (subs.size() != arity_) throw ArityMismatch("PolyExpr::compose: substitution count");
  const std::size_t out = subs.empty() ? 0 : subs[0].arity();
  PolyExpr r(out);
  for (const auto& [m, c] : terms_) {
    PolyExpr t = constant(out, c);
    for (std::size_t i = 0; i < arity_; ++i) {
      if (m.e[i]) t = t * subs[i].pow(m.e[i]);
    }
    r += t;
  }
  return r;
}

std::string to_string(const Rational& q) {
  return q.get_str();
}

std::string to_string(const PolyExpr& p, const std::vector<std::string>& names) {
  if (names.size() != p.arity()) throw ArityMismatch("to_string: name count");
  if (p.is_zero()) return "0";
  std::string s;
  bool first = true;
  for (auto it = p.terms().rbegin(); it != p.terms().rend(); ++it) {
    const auto& [m, c] = *it;
    const bool neg = c < 0;
    if (first) {
      if (neg) s += "-";
    } else {
      s += neg ? " - " : " + ";
    }
    first = false;
    Rational a = abs(c);
    std::string mono;
    for (std::size_t i = 0; i < p.arity(); ++i) {
      if (!m.e[i]) continue;
      if (!mono.empty()) mono += "*";
      mono += names[i];
      if (m.e[i] > 1) mono += "^" + std::to_string(m.e[i]);
    }
    if (mono.empty()) {
      s += to_string(a);
    } else if (a == 1) {
      s += mono;
    } else {
      s += to_string(a) + "*" + mono;
    }
  }
  return s;
}

Rational parse_rational(std::string_view text) {
  std::string t(text);
  auto dot = t.find('.');
  if (dot != std::string::npos) {
    std::string ip = t.substr(0, dot), fp = t.substr(dot + 1);
    if (ip.empty()) ip = "0";
    std::string num = ip + fp;
    num.erase(0, std::min(num.find_first_not_of('0'), num.size() - 1));
    std::string den = "1" + std::string(fp.size(), '0');
    Rational q;
    if (q.set_str(num + "/" + den, 10) != 0) throw ParseError("bad decimal literal '" + t + "'");
    q.canonicalize();
    return q;
  }
  Rational q;
  if (q.set_str(t, 10) != 0) throw ParseError("bad rational literal '" + t + "'");
  q.canonicalize();
  return q;
}

namespace {

class PolyParser {
 public:
  PolyParser(std::string_view s, const std::vector<std::string>& names)
      : s_(s), names_(names) {}

  PolyExpr parse() {
    PolyExpr r = expr();
    skip();
    if (pos_ != s_.size()) fail("trailing input");
    return r;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("parse_poly: " + what + " at column " + std::to_string(pos_) +
                     " in '" + std::string(s_) + "'");
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  PolyExpr expr() {
    PolyExpr r = term();
    for (;;) {
      if (accept('+')) {
        r += term();
      } else if (accept('-')) {
        r -= term();
      } else {
        return r;
      }
    }
  }

  PolyExpr term() {
    PolyExpr r = factor();
    for (;;) {
      if (accept('*')) {
        r = r * factor();
      } else if (accept('/')) {
        PolyExpr d = factor();
        if (!d.is_constant() || d.is_zero()) fail("division by a non-constant or zero");
        r *= Rational(1) / d.coeff(Monomial{});
      } else {
        return r;
      }
    }
  }

  PolyExpr factor() {
    if (accept('-')) return -factor();
    if (accept('+')) return factor();
    PolyExpr base = primary();
    if (accept('^')) {
      skip();
      std::size_t start = pos_;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      if (start == pos_) fail("expected integer exponent");
      unsigned k = std::stoul(std::string(s_.substr(start, pos_ - start)));
      if (k > static_cast<unsigned>(kDefaultDegreeCap)) fail("exponent too large");
      base = base.pow(k);
    }
    return base;
  }

  PolyExpr primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end");
    char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      PolyExpr r = expr();
      if (!accept(')')) fail("expected ')'");
      return r;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t start = pos_;
      while (pos_ < s_.size() &&
             (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.'))
        ++pos_;
      return PolyExpr::constant(names_.size(), parse_rational(s_.substr(start, pos_ - start)));
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
        ++pos_;
      std::string name(s_.substr(start, pos_ - start));
      auto it = std::find(names_.begin(), names_.end(), name);
      if (it == names_.end()) fail("unknown variable '" + name + "'");
      return PolyExpr::variable(names_.size(), it - names_.begin());
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  std::string_view s_;
  const std::vector<std::string>& names_;
  std::size_t pos_ = 0;
};

}  // namespace

PolyExpr parse_poly(std::string_view text, const std::vector<std::string>& names) {
  return PolyParser(text, names).parse();
}

}  // namespace cdgamma
