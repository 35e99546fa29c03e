#include "cdgamma/expr.hpp"

#include <cctype>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>

#include "cdgamma/poly.hpp"

namespace cdgamma {

struct Expr::Node {
  enum Kind { kConst, kVar, kNeg, kAdd, kSub, kMul, kDiv, kPow, kCall } kind = kConst;
  double value = 0;
  std::size_t var = 0;
  double (*fn)(double) = nullptr;
  std::shared_ptr<const Node> a, b;

  double eval(std::span<const double> x) const {
    switch (kind) {
      case kConst:
        return value;
      case kVar:
        return x[var];
      case kNeg:
        return -a->eval(x);
      case kAdd:
        return a->eval(x) + b->eval(x);
      case kSub:
        return a->eval(x) - b->eval(x);
      case kMul:
        return a->eval(x) * b->eval(x);
      case kDiv:
        return a->eval(x) / b->eval(x);
      case kPow: {
        const double e = b->eval(x);
        // integer powers of negative bases stay real
        if (e == std::round(e) && std::abs(e) <= 64) {
          double r = 1, base = a->eval(x);
          for (int k = 0; k < std::abs(static_cast<int>(e)); ++k) r *= base;
          return e < 0 ? 1 / r : r;
        }
        return std::pow(a->eval(x), e);
      }
      case kCall:
        return fn(a->eval(x));
    }
    return 0;
  }
};

namespace {

using NodePtr = std::shared_ptr<const Expr::Node>;

NodePtr make(Expr::Node n) { return std::make_shared<const Expr::Node>(std::move(n)); }

NodePtr binary(Expr::Node::Kind k, NodePtr a, NodePtr b) {
  Expr::Node n;
  n.kind = k;
  n.a = std::move(a);
  n.b = std::move(b);
  return make(std::move(n));
}

const std::map<std::string, double (*)(double)>& functions() {
  static const std::map<std::string, double (*)(double)> f = {
      {"sin", [](double v) { return std::sin(v); }},
      {"cos", [](double v) { return std::cos(v); }},
      {"tan", [](double v) { return std::tan(v); }},
      {"exp", [](double v) { return std::exp(v); }},
      {"log", [](double v) { return std::log(v); }},
      {"sqrt", [](double v) { return std::sqrt(v); }},
      {"abs", [](double v) { return std::abs(v); }},
      {"tanh", [](double v) { return std::tanh(v); }},
      {"cosh", [](double v) { return std::cosh(v); }},
      {"sinh", [](double v) { return std::sinh(v); }},
      {"atan", [](double v) { return std::atan(v); }},
  };
  return f;
}

class ExprParser {
 public:
  ExprParser(std::string_view s, const std::vector<std::string>& names) : s_(s), names_(names) {}

  NodePtr parse() {
    NodePtr r = expr();
    skip();
    if (pos_ != s_.size()) fail("trailing input");
    return r;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("expression: " + what + " at column " + std::to_string(pos_) + " in '" +
                     std::string(s_) + "'");
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

  NodePtr expr() {
    NodePtr r = term();
    for (;;) {
      if (accept('+')) {
        r = binary(Expr::Node::kAdd, r, term());
      } else if (accept('-')) {
        r = binary(Expr::Node::kSub, r, term());
      } else {
        return r;
      }
    }
  }

  NodePtr term() {
    NodePtr r = unary();
    for (;;) {
      if (accept('*')) {
        r = binary(Expr::Node::kMul, r, unary());
      } else if (accept('/')) {
        r = binary(Expr::Node::kDiv, r, unary());
      } else {
        return r;
      }
    }
  }

  NodePtr unary() {
    if (accept('-')) {
      Expr::Node n;
      n.kind = Expr::Node::kNeg;
      n.a = unary();
      return make(std::move(n));
    }
    if (accept('+')) return unary();
    NodePtr base = primary();
    // right associative, binds tighter than unary minus on its left
    if (accept('^')) return binary(Expr::Node::kPow, base, unary());
    return base;
  }

  NodePtr primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end");
    const char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr r = expr();
      if (!accept(')')) fail("expected ')'");
      return r;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const std::string rest(s_.substr(pos_));
      char* end = nullptr;
      const double v = std::strtod(rest.c_str(), &end);
      if (end == rest.c_str()) fail("bad number");
      pos_ += static_cast<std::size_t>(end - rest.c_str());
      Expr::Node n;
      n.value = v;
      return make(std::move(n));
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
        ++pos_;
      const std::string name(s_.substr(start, pos_ - start));
      for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i] == name) {
          Expr::Node n;
          n.kind = Expr::Node::kVar;
          n.var = i;
          return make(std::move(n));
        }
      }
      if (name == "pi") {
        Expr::Node n;
        n.value = std::numbers::pi;
        return make(std::move(n));
      }
      auto it = functions().find(name);
      if (it == functions().end()) fail("unknown name '" + name + "'");
      if (!accept('(')) fail("expected '(' after " + name);
      Expr::Node n;
      n.kind = Expr::Node::kCall;
      n.fn = it->second;
      n.a = expr();
      if (!accept(')')) fail("expected ')'");
      return make(std::move(n));
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  std::string_view s_;
  const std::vector<std::string>& names_;
  std::size_t pos_ = 0;
};

}  // namespace

Expr Expr::parse(std::string_view text, const std::vector<std::string>& names) {
  Expr e;
  e.text_ = std::string(text);
  e.root_ = ExprParser(text, names).parse();
  e.arity_ = names.size();
  return e;
}

double Expr::eval(std::span<const double> x) const {
  if (x.size() != arity_) throw std::invalid_argument("Expr::eval: point dimension");
  return root_->eval(x);
}

}  // namespace cdgamma
