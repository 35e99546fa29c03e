#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cdgamma {

// Real-valued analytic expression over named coordinates. Supports + - * / ^,
// parentheses, decimal literals, pi, and sin cos tan exp log sqrt abs tanh
// cosh sinh atan.
class Expr {
 public:
  static Expr parse(std::string_view text, const std::vector<std::string>& names);

  double eval(std::span<const double> x) const;
  const std::string& text() const { return text_; }

  struct Node;

 private:
  std::string text_;
  std::shared_ptr<const Node> root_;
  std::size_t arity_ = 0;
};

}  // namespace cdgamma
