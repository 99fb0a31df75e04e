#include "mlab/expr.hpp"

#include <cctype>
#include <functional>

#include "mlab/dyadic.hpp"

namespace mlab {

struct Expr::Node {
  enum Kind { num, var, neg, add, sub, mul, div, pow, call } kind;
  cd value{0};
  std::string name;
  std::shared_ptr<const Node> a, b;
};

namespace {

using NodeP = std::shared_ptr<const Expr::Node>;

struct Parser {
  const std::string& s;
  std::size_t i = 0;

  void skip() {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  }
  bool eat(char c) {
    skip();
    if (i < s.size() && s[i] == c) {
      ++i;
      return true;
    }
    return false;
  }
  [[noreturn]] void fail(const std::string& what) {
    throw Error("expr: " + what + " at position " + std::to_string(i) + " in '" + s + "'");
  }
  NodeP make(Expr::Node::Kind k, NodeP a, NodeP b = nullptr) {
    auto n = std::make_shared<Expr::Node>();
    n->kind = k;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
  }

  NodeP expr() {
    NodeP l = term();
    for (;;) {
      if (eat('+')) l = make(Expr::Node::add, l, term());
      else if (eat('-')) l = make(Expr::Node::sub, l, term());
      else return l;
    }
  }
  NodeP term() {
    NodeP l = unary();
    for (;;) {
      if (eat('*')) l = make(Expr::Node::mul, l, unary());
      else if (eat('/')) l = make(Expr::Node::div, l, unary());
      else return l;
    }
  }
  NodeP unary() {
    if (eat('-')) return make(Expr::Node::neg, unary());
    if (eat('+')) return unary();
    return power();
  }
  NodeP power() {
    NodeP base = atom();
    if (eat('^')) return make(Expr::Node::pow, base, unary());
    return base;
  }
  NodeP atom() {
    skip();
    if (i >= s.size()) fail("unexpected end");
    if (eat('(')) {
      NodeP e = expr();
      if (!eat(')')) fail("missing ')'");
      return e;
    }
    char c = s[i];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t used = 0;
      double v = std::stod(s.substr(i), &used);
      i += used;
      auto n = std::make_shared<Expr::Node>();
      n->kind = Expr::Node::num;
      n->value = v;
      return n;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t st = i;
      while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_')) ++i;
      std::string name = s.substr(st, i - st);
      if (eat('(')) {
        NodeP arg = expr();
        if (!eat(')')) fail("missing ')'");
        auto n = std::make_shared<Expr::Node>();
        n->kind = Expr::Node::call;
        n->name = name;
        n->a = arg;
        return n;
      }
      auto n = std::make_shared<Expr::Node>();
      n->kind = Expr::Node::var;
      n->name = name;
      return n;
    }
    fail(std::string("unexpected character '") + c + "'");
  }
};

cd apply_fn(const std::string& f, cd x) {
  if (f == "exp") return std::exp(x);
  if (f == "log") return std::log(x);
  if (f == "sqrt") return std::sqrt(x);
  if (f == "sin") return std::sin(x);
  if (f == "cos") return std::cos(x);
  if (f == "tanh") return std::tanh(x);
  if (f == "abs") return std::abs(x);
  if (f == "bump") return smooth_cut(std::abs(x), 0.5, 1.0);
  throw Error("expr: unknown function " + f);
}

cd eval_node(const Expr::Node& n, const std::map<std::string, cd>& vars) {
  using K = Expr::Node;
  switch (n.kind) {
    case K::num: return n.value;
    case K::var: {
      if (n.name == "pi") return kPi;
      if (n.name == "i") return kI;
      auto it = vars.find(n.name);
      if (it == vars.end()) throw Error("expr: unknown variable " + n.name);
      return it->second;
    }
    case K::neg: return -eval_node(*n.a, vars);
    case K::add: return eval_node(*n.a, vars) + eval_node(*n.b, vars);
    case K::sub: return eval_node(*n.a, vars) - eval_node(*n.b, vars);
    case K::mul: return eval_node(*n.a, vars) * eval_node(*n.b, vars);
    case K::div: return eval_node(*n.a, vars) / eval_node(*n.b, vars);
    case K::pow: {
      cd b = eval_node(*n.a, vars), e = eval_node(*n.b, vars);
      if (e.imag() == 0 && e.real() == std::round(e.real()) && std::abs(e.real()) < 64) {
        int k = int(e.real());
        cd r = 1;
        for (int t = 0; t < std::abs(k); ++t) r *= b;
        return k >= 0 ? r : cd(1) / r;
      }
      if (b.imag() == 0 && b.real() > 0 && e.imag() == 0) return std::pow(b.real(), e.real());
      return std::pow(b, e);
    }
    case K::call: return apply_fn(n.name, eval_node(*n.a, vars));
  }
  return 0;
}

}  // namespace

Expr Expr::parse(const std::string& text) {
  Parser p{text};
  Expr e;
  e.text_ = text;
  e.root_ = p.expr();
  p.skip();
  if (p.i != text.size()) p.fail("trailing input");
  return e;
}

cd Expr::eval(const std::map<std::string, cd>& vars) const { return eval_node(*root_, vars); }

}  // namespace mlab
