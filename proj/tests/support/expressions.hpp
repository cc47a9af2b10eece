#pragma once

#include <cmath>
#include <string>

#include "stringbo/grammar.hpp"
#include "stringbo/tokens.hpp"

namespace stringbo::testing {

// Token-level tokenizer for the built-in expression grammar.
inline Str expr_tokens(const std::string& text) {
  static const Alphabet a({"+", "*", "/", "(", ")", "sin(", "exp(", "x", "1", "2", "3"});
  return a.tokenize(text);
}

// Recursive descent straight on tokens: S := T (op T)*, left to right, all
// operators equal.
class DirectEvaluator {
 public:
  DirectEvaluator(const Str& s, double x) : s_(s), x_(x) {}

  double run() {
    const double v = expr();
    if (i_ != s_.size()) throw Error("trailing tokens");
    return v;
  }

 private:
  double expr() {
    double v = term();
    while (i_ < s_.size() && (s_[i_] == "+" || s_[i_] == "*" || s_[i_] == "/")) {
      const auto op = s_[i_++];
      const double r = term();
      v = op == "+" ? v + r : op == "*" ? v * r : v / r;
    }
    return v;
  }
  double term() {
    const auto t = s_.at(i_++);
    if (t == "x") return x_;
    if (t == "1" || t == "2" || t == "3") return t[0] - '0';
    const double inner = expr();
    if (s_.at(i_++) != ")") throw Error("missing )");
    if (t == "sin(") return std::sin(inner);
    if (t == "exp(") return std::exp(inner);
    return inner;
  }

  const Str& s_;
  double x_;
  std::size_t i_ = 0;
};

inline double direct_eval(const Str& s, double x) { return DirectEvaluator(s, x).run(); }

// Builds the built-in grammar's tree for an expression text.
class TreeBuilder {
 public:
  explicit TreeBuilder(const std::string& text) : s_(expr_tokens(text)) {}

  ParseTree run() { return s(); }

 private:
  static ParseTree leaf(const std::string& t) { return {t, -1, {}}; }
  ParseTree s() {
    ParseTree node{"S", 3, {t()}};
    while (i_ < s_.size() && (s_[i_] == "+" || s_[i_] == "*" || s_[i_] == "/")) {
      const auto op = s_[i_++];
      const int rule = op == "+" ? 0 : op == "*" ? 1 : 2;
      node = ParseTree{"S", rule, {node, leaf(op), t()}};
    }
    return node;
  }
  ParseTree t() {
    const auto tok = s_.at(i_++);
    if (tok == "x") return {"T", 7, {leaf(tok)}};
    if (tok == "1" || tok == "2" || tok == "3") return {"T", 7 + (tok[0] - '0'), {leaf(tok)}};
    const int rule = tok == "(" ? 4 : tok == "sin(" ? 5 : 6;
    ParseTree inner = s();
    ++i_;
    return {"T", rule, {leaf(tok), inner, leaf(")")}};
  }

  Str s_;
  std::size_t i_ = 0;
};

inline ParseTree expr_tree(const std::string& text) { return TreeBuilder(text).run(); }

}  // namespace stringbo::testing
