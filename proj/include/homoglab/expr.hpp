#pragma once

// Small arithmetic expression language for boundary and source data.
//
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := unary ('^' factor)?
//   unary  := '-'? atom
//   atom   := number | 'x'digit | func '(' expr ')' | '(' expr ')'
//   func   := sin | cos | exp | abs
//
// The exponent of '^' must be a constant nonnegative integer. Division by zero
// evaluates to 0 so evaluation is total.

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <algorithm>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "homoglab/error.hpp"

namespace homoglab {

namespace detail {
class ExprParser;
}

class Expr {
 public:
  enum class Op : std::uint8_t { num, var, neg, add, sub, mul, div, pow, sin, cos, exp, abs };

  Expr() = default;

  double eval(std::span<const double> x) const {
    if (nodes_.empty()) return 0.0;
    return eval_node(nodes_.size() - 1, x);
  }

  /// Largest variable index used (1-based), 0 if none.
  int max_variable() const noexcept {
    int v = 0;
    for (const Node& n : nodes_)
      if (n.op == Op::var) v = std::max(v, n.var + 1);
    return v;
  }

  const std::string& source() const noexcept { return src_; }

  friend Expr parse_expr(std::string_view src);
  friend class detail::ExprParser;

 private:
  struct Node {
    Op op = Op::num;
    double value = 0.0;  // number, or exponent for pow
    int var = 0;
    std::size_t a = 0, b = 0;
  };
  std::vector<Node> nodes_;  // children always precede parents
  std::string src_;

  double eval_node(std::size_t i, std::span<const double> x) const {
    const Node& n = nodes_[i];
    switch (n.op) {
      case Op::num: return n.value;
      case Op::var: return static_cast<std::size_t>(n.var) < x.size() ? x[static_cast<std::size_t>(n.var)] : 0.0;
      case Op::neg: return -eval_node(n.a, x);
      case Op::add: return eval_node(n.a, x) + eval_node(n.b, x);
      case Op::sub: return eval_node(n.a, x) - eval_node(n.b, x);
      case Op::mul: return eval_node(n.a, x) * eval_node(n.b, x);
      case Op::div: {
        const double den = eval_node(n.b, x);
        return den == 0.0 ? 0.0 : eval_node(n.a, x) / den;
      }
      case Op::pow: {
        const double base = eval_node(n.a, x);
        double r = 1.0;
        for (auto k = static_cast<std::uint64_t>(n.value), p = std::uint64_t{0}; p < k; ++p) r *= base;
        return r;
      }
      case Op::sin: return std::sin(eval_node(n.a, x));
      case Op::cos: return std::cos(eval_node(n.a, x));
      case Op::exp: return std::exp(eval_node(n.a, x));
      case Op::abs: return std::abs(eval_node(n.a, x));
    }
    return 0.0;
  }
};

namespace detail {

class ExprParser {
 public:
  explicit ExprParser(std::string_view s) : s_(s) {}

  std::vector<Expr::Node>& nodes() { return nodes_; }

  void parse() {
    skip();
    if (pos_ >= s_.size()) fail("empty expression");
    expr();
    skip();
    if (pos_ < s_.size()) fail(std::string("unexpected '") + s_[pos_] + "'");
  }

 private:
  using Node = Expr::Node;
  using Op = Expr::Op;
  std::string_view s_;
  std::size_t pos_ = 0;
  std::vector<Node> nodes_;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("expression: " + msg, pos_);
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

  std::size_t push(Node n) {
    nodes_.push_back(n);
    return nodes_.size() - 1;
  }

  std::size_t binary(Op op, std::size_t a, std::size_t b) {
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    return push(n);
  }

  std::size_t expr() {
    std::size_t lhs = term();
    for (;;) {
      if (accept('+'))
        lhs = binary(Op::add, lhs, term());
      else if (accept('-'))
        lhs = binary(Op::sub, lhs, term());
      else
        return lhs;
    }
  }

  std::size_t term() {
    std::size_t lhs = factor();
    for (;;) {
      if (accept('*'))
        lhs = binary(Op::mul, lhs, factor());
      else if (accept('/'))
        lhs = binary(Op::div, lhs, factor());
      else
        return lhs;
    }
  }

  // The exponent is itself a factor (right associativity) but must fold to a constant.
  std::size_t factor() {
    const std::size_t base = unary();
    skip();
    const std::size_t at = pos_;
    if (!accept('^')) return base;
    const std::size_t e = factor();
    const double v = constant_value(e, at);
    if (!(v >= 0.0) || v != std::floor(v) || v > 1e6) {
      pos_ = at;
      fail("exponent must be a nonnegative integer");
    }
    Node n;
    n.op = Op::pow;
    n.a = base;
    n.value = v;
    return push(n);
  }

  double constant_value(std::size_t i, std::size_t at) {
    const Node& n = nodes_[i];
    switch (n.op) {
      case Op::num: return n.value;
      case Op::neg: return -constant_value(n.a, at);
      case Op::pow: {
        const double b = constant_value(n.a, at);
        return std::pow(b, n.value);
      }
      default: pos_ = at; fail("exponent must be a constant");
    }
  }

  std::size_t unary() {
    if (accept('-')) {
      Node n;
      n.op = Op::neg;
      n.a = atom();
      return push(n);
    }
    return atom();
  }

  std::size_t atom() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    const char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(s_.data() + pos_, s_.data() + s_.size(), v);
      if (ec != std::errc()) fail("malformed number");
      pos_ = static_cast<std::size_t>(ptr - s_.data());
      Node n;
      n.value = v;
      return push(n);
    }
    if (c == '(') {
      ++pos_;
      const std::size_t e = expr();
      if (!accept(')')) fail("expected ')'");
      return e;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      const std::string_view id = s_.substr(start, pos_ - start);
      if (id.size() == 2 && id[0] == 'x' && id[1] >= '1' && id[1] <= '9') {
        Node n;
        n.op = Op::var;
        n.var = id[1] - '1';
        return push(n);
      }
      Op op;
      if (id == "sin")
        op = Op::sin;
      else if (id == "cos")
        op = Op::cos;
      else if (id == "exp")
        op = Op::exp;
      else if (id == "abs")
        op = Op::abs;
      else {
        pos_ = start;
        fail("unknown identifier '" + std::string(id) + "'");
      }
      if (!accept('(')) fail("expected '(' after " + std::string(id));
      Node n;
      n.op = op;
      n.a = expr();
      if (!accept(')')) fail("expected ')'");
      return push(n);
    }
    fail(std::string("unexpected '") + c + "'");
  }
};

}  // namespace detail

inline Expr parse_expr(std::string_view src) {
  detail::ExprParser p(src);
  p.parse();
  Expr e;
  e.nodes_ = std::move(p.nodes());
  e.src_ = std::string(src);
  return e;
}

}  // namespace homoglab
