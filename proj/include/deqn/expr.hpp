#pragma once

#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>

#include "deqn/tape.hpp"

namespace deqn {

enum class UnaryFn { Neg, Log, Exp, Sin, Cos, Sqrt, Tanh, Abs, Sigmoid };
enum class BinaryFn { Add, Sub, Mul, Div, Pow };

struct ExprNode;
using ExprPtr = std::shared_ptr<const ExprNode>;

struct ExprNode {
  enum class Kind { Constant, Variable, Unary, Binary } kind;
  double value = 0.0;        // Constant
  std::string name;          // Variable
  UnaryFn ufn = UnaryFn::Neg;
  BinaryFn bfn = BinaryFn::Add;
  ExprPtr left, right;       // Unary uses left only

  static ExprPtr constant(double v);
  static ExprPtr variable(std::string name);
  static ExprPtr unary(UnaryFn fn, ExprPtr child);
  static ExprPtr binary(BinaryFn fn, ExprPtr l, ExprPtr r);
};

bool structurally_equal(const ExprPtr& a, const ExprPtr& b);

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, std::size_t offset)
      : std::runtime_error(msg + " (at offset " + std::to_string(offset) + ")"),
        offset(offset) {}
  std::size_t offset;
};

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Grammar: identifiers [A-Za-z_][A-Za-z0-9_]*, decimal/scientific literals,
// + - * / ^ ** (both ^ and ** are power, right-associative), parentheses,
// fn(expr) calls. Precedence: power > unary minus > mul/div > add/sub.
ExprPtr parse_formula(const std::string& text);

// Canonical text form; parse_formula(format_expr(e)) is structurally equal
// to e.
std::string format_expr(const ExprPtr& e);

// Names of all Variable nodes in the tree.
std::set<std::string> collect_variables(const ExprPtr& e);

using EvalContext = std::map<std::string, Var>;

// Elementwise evaluation against named batched values. Non-finite results
// propagate (IEEE semantics); unknown names throw EvalError.
Var evaluate(const ExprPtr& e, const EvalContext& ctx, Tape& tape);

// Plain-double evaluation for scalar contexts (oracles, masks).
double evaluate_scalar(const ExprPtr& e,
                       const std::map<std::string, double>& ctx);

}  // namespace deqn
