#pragma once

#include <map>
#include <memory>
#include <string>

#include "mlab/core.hpp"

namespace mlab {

// Small complex-valued expression language for config-addressable multipliers.
// Grammar: sums/products/powers, unary minus, parentheses, function calls
// (exp log sqrt sin cos tanh abs bump), named variables and constants (pi, i).
class Expr {
 public:
  static Expr parse(const std::string& text);
  cd eval(const std::map<std::string, cd>& vars) const;
  const std::string& text() const { return text_; }

  struct Node;

 private:
  std::string text_;
  std::shared_ptr<const Node> root_;
};

}  // namespace mlab
