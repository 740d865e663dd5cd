#include "deqn/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <sstream>

namespace deqn {

ExprPtr ExprNode::constant(double v) {
  auto n = std::make_shared<ExprNode>();
  n->kind = Kind::Constant;
  n->value = v;
  return n;
}

ExprPtr ExprNode::variable(std::string name) {
  auto n = std::make_shared<ExprNode>();
  n->kind = Kind::Variable;
  n->name = std::move(name);
  return n;
}

ExprPtr ExprNode::unary(UnaryFn fn, ExprPtr child) {
  // Negated literals are stored as negative constants, so every tree has a
  // text form that reparses to the identical structure.
  if (fn == UnaryFn::Neg && child->kind == Kind::Constant)
    return constant(-child->value);
  auto n = std::make_shared<ExprNode>();
  n->kind = Kind::Unary;
  n->ufn = fn;
  n->left = std::move(child);
  return n;
}

ExprPtr ExprNode::binary(BinaryFn fn, ExprPtr l, ExprPtr r) {
  auto n = std::make_shared<ExprNode>();
  n->kind = Kind::Binary;
  n->bfn = fn;
  n->left = std::move(l);
  n->right = std::move(r);
  return n;
}

bool structurally_equal(const ExprPtr& a, const ExprPtr& b) {
  if (!a || !b) return a == b;
  if (a->kind != b->kind) return false;
  switch (a->kind) {
    case ExprNode::Kind::Constant: return a->value == b->value;
    case ExprNode::Kind::Variable: return a->name == b->name;
    case ExprNode::Kind::Unary:
      return a->ufn == b->ufn && structurally_equal(a->left, b->left);
    case ExprNode::Kind::Binary:
      return a->bfn == b->bfn && structurally_equal(a->left, b->left) &&
             structurally_equal(a->right, b->right);
  }
  return false;
}

namespace {

struct Parser {
  const std::string& s;
  std::size_t pos = 0;

  explicit Parser(const std::string& text) : s(text) {}

  void skip_ws() {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos])))
      ++pos;
  }

  bool eof() {
    skip_ws();
    return pos >= s.size();
  }

  char peek() {
    skip_ws();
    return pos < s.size() ? s[pos] : '\0';
  }

  bool consume(char c) {
    skip_ws();
    if (pos < s.size() && s[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& msg) {
    throw ParseError(msg, pos);
  }

  // addsub := muldiv (('+'|'-') muldiv)*
  ExprPtr parse_addsub() {
    ExprPtr lhs = parse_muldiv();
    for (;;) {
      if (consume('+'))
        lhs = ExprNode::binary(BinaryFn::Add, lhs, parse_muldiv());
      else if (consume('-'))
        lhs = ExprNode::binary(BinaryFn::Sub, lhs, parse_muldiv());
      else
        return lhs;
    }
  }

  // muldiv := unary (('*'|'/') unary)*, where '**' belongs to power
  ExprPtr parse_muldiv() {
    ExprPtr lhs = parse_unary();
    for (;;) {
      skip_ws();
      if (pos < s.size() && s[pos] == '*' &&
          !(pos + 1 < s.size() && s[pos + 1] == '*')) {
        ++pos;
        lhs = ExprNode::binary(BinaryFn::Mul, lhs, parse_unary());
      } else if (pos < s.size() && s[pos] == '/') {
        ++pos;
        lhs = ExprNode::binary(BinaryFn::Div, lhs, parse_unary());
      } else {
        return lhs;
      }
    }
  }

  // unary := '-' unary | power
  ExprPtr parse_unary() {
    if (consume('-')) return ExprNode::unary(UnaryFn::Neg, parse_unary());
    return parse_power();
  }

  // power := atom (('^'|'**') unary)?   (right-associative; exponent may
  // carry a unary minus, e.g. x^-2)
  ExprPtr parse_power() {
    ExprPtr base = parse_atom();
    skip_ws();
    if (pos < s.size() && s[pos] == '^') {
      ++pos;
      return ExprNode::binary(BinaryFn::Pow, base, parse_unary());
    }
    if (pos + 1 < s.size() && s[pos] == '*' && s[pos + 1] == '*') {
      pos += 2;
      return ExprNode::binary(BinaryFn::Pow, base, parse_unary());
    }
    return base;
  }

  ExprPtr parse_atom() {
    skip_ws();
    if (pos >= s.size()) fail("unexpected end of formula");
    const char c = s[pos];
    if (c == '(') {
      ++pos;
      ExprPtr e = parse_addsub();
      if (!consume(')')) fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.')
      return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_')
      return parse_ident();
    fail(std::string("unexpected character '") + c + "'");
  }

  ExprPtr parse_number() {
    const char* begin = s.c_str() + pos;
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin) fail("bad numeric literal");
    pos += static_cast<std::size_t>(end - begin);
    return ExprNode::constant(v);
  }

  ExprPtr parse_ident() {
    const std::size_t start = pos;
    while (pos < s.size() &&
           (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_'))
      ++pos;
    std::string name = s.substr(start, pos - start);
    skip_ws();
    if (pos < s.size() && s[pos] == '(') {
      ++pos;
      const UnaryFn fn = [&]() -> UnaryFn {
        if (name == "log") return UnaryFn::Log;
        if (name == "exp") return UnaryFn::Exp;
        if (name == "sin") return UnaryFn::Sin;
        if (name == "cos") return UnaryFn::Cos;
        if (name == "sqrt") return UnaryFn::Sqrt;
        if (name == "tanh") return UnaryFn::Tanh;
        if (name == "abs") return UnaryFn::Abs;
        if (name == "sigmoid") return UnaryFn::Sigmoid;
        pos = start;
        fail("unknown function '" + name + "'");
      }();
      ExprPtr arg = parse_addsub();
      if (!consume(')')) fail("expected ')' after function argument");
      return ExprNode::unary(fn, arg);
    }
    return ExprNode::variable(std::move(name));
  }
};

const char* unary_name(UnaryFn fn) {
  switch (fn) {
    case UnaryFn::Neg: return "-";
    case UnaryFn::Log: return "log";
    case UnaryFn::Exp: return "exp";
    case UnaryFn::Sin: return "sin";
    case UnaryFn::Cos: return "cos";
    case UnaryFn::Sqrt: return "sqrt";
    case UnaryFn::Tanh: return "tanh";
    case UnaryFn::Abs: return "abs";
    case UnaryFn::Sigmoid: return "sigmoid";
  }
  return "?";
}

void format_rec(const ExprPtr& e, std::ostringstream& out) {
  switch (e->kind) {
    case ExprNode::Kind::Constant: {
      std::ostringstream num;
      num.precision(17);
      num << e->value;
      // Parenthesize negative literals so "-c^e" round-trips as a negative
      // base rather than reparsing as -(c^e).
      if (std::signbit(e->value))
        out << "(" << num.str() << ")";
      else
        out << num.str();
      break;
    }
    case ExprNode::Kind::Variable:
      out << e->name;
      break;
    case ExprNode::Kind::Unary:
      if (e->ufn == UnaryFn::Neg) {
        out << "(-";
        format_rec(e->left, out);
        out << ")";
      } else {
        out << unary_name(e->ufn) << "(";
        format_rec(e->left, out);
        out << ")";
      }
      break;
    case ExprNode::Kind::Binary: {
      const char* op = nullptr;
      switch (e->bfn) {
        case BinaryFn::Add: op = "+"; break;
        case BinaryFn::Sub: op = "-"; break;
        case BinaryFn::Mul: op = "*"; break;
        case BinaryFn::Div: op = "/"; break;
        case BinaryFn::Pow: op = "^"; break;
      }
      out << "(";
      format_rec(e->left, out);
      out << op;
      format_rec(e->right, out);
      out << ")";
      break;
    }
  }
}

}  // namespace

ExprPtr parse_formula(const std::string& text) {
  Parser p(text);
  if (p.eof()) throw ParseError("empty formula", 0);
  ExprPtr e = p.parse_addsub();
  if (!p.eof()) p.fail("trailing characters after formula");
  return e;
}

std::string format_expr(const ExprPtr& e) {
  std::ostringstream out;
  format_rec(e, out);
  return out.str();
}

namespace {
void collect_rec(const ExprPtr& e, std::set<std::string>& out) {
  switch (e->kind) {
    case ExprNode::Kind::Variable: out.insert(e->name); break;
    case ExprNode::Kind::Unary: collect_rec(e->left, out); break;
    case ExprNode::Kind::Binary:
      collect_rec(e->left, out);
      collect_rec(e->right, out);
      break;
    default: break;
  }
}
}  // namespace

std::set<std::string> collect_variables(const ExprPtr& e) {
  std::set<std::string> out;
  collect_rec(e, out);
  return out;
}

Var evaluate(const ExprPtr& e, const EvalContext& ctx, Tape& tape) {
  switch (e->kind) {
    case ExprNode::Kind::Constant:
      return tape.scalar(e->value);
    case ExprNode::Kind::Variable: {
      auto it = ctx.find(e->name);
      if (it == ctx.end())
        throw EvalError("unknown variable '" + e->name + "'");
      return it->second;
    }
    case ExprNode::Kind::Unary: {
      Var c = evaluate(e->left, ctx, tape);
      switch (e->ufn) {
        case UnaryFn::Neg: return tape.neg(c);
        case UnaryFn::Log: return tape.log(c);
        case UnaryFn::Exp: return tape.exp(c);
        case UnaryFn::Sin: return tape.sin(c);
        case UnaryFn::Cos: return tape.cos(c);
        case UnaryFn::Sqrt: return tape.sqrt(c);
        case UnaryFn::Tanh: return tape.tanh(c);
        case UnaryFn::Abs: return tape.abs(c);
        case UnaryFn::Sigmoid: return tape.sigmoid(c);
      }
      break;
    }
    case ExprNode::Kind::Binary: {
      Var l = evaluate(e->left, ctx, tape);
      Var r = evaluate(e->right, ctx, tape);
      switch (e->bfn) {
        case BinaryFn::Add: return tape.add(l, r);
        case BinaryFn::Sub: return tape.sub(l, r);
        case BinaryFn::Mul: return tape.mul(l, r);
        case BinaryFn::Div: return tape.div(l, r);
        case BinaryFn::Pow: return tape.pow(l, r);
      }
      break;
    }
  }
  throw EvalError("malformed expression tree");
}

double evaluate_scalar(const ExprPtr& e,
                       const std::map<std::string, double>& ctx) {
  switch (e->kind) {
    case ExprNode::Kind::Constant:
      return e->value;
    case ExprNode::Kind::Variable: {
      auto it = ctx.find(e->name);
      if (it == ctx.end())
        throw EvalError("unknown variable '" + e->name + "'");
      return it->second;
    }
    case ExprNode::Kind::Unary: {
      const double c = evaluate_scalar(e->left, ctx);
      switch (e->ufn) {
        case UnaryFn::Neg: return -c;
        case UnaryFn::Log: return std::log(c);
        case UnaryFn::Exp: return std::exp(c);
        case UnaryFn::Sin: return std::sin(c);
        case UnaryFn::Cos: return std::cos(c);
        case UnaryFn::Sqrt: return std::sqrt(c);
        case UnaryFn::Tanh: return std::tanh(c);
        case UnaryFn::Abs: return std::fabs(c);
        case UnaryFn::Sigmoid:
          return c >= 0 ? 1.0 / (1.0 + std::exp(-c))
                        : std::exp(c) / (1.0 + std::exp(c));
      }
      break;
    }
    case ExprNode::Kind::Binary: {
      const double l = evaluate_scalar(e->left, ctx);
      const double r = evaluate_scalar(e->right, ctx);
      switch (e->bfn) {
        case BinaryFn::Add: return l + r;
        case BinaryFn::Sub: return l - r;
        case BinaryFn::Mul: return l * r;
        case BinaryFn::Div: return l / r;
        case BinaryFn::Pow: return std::pow(l, r);
      }
      break;
    }
  }
  throw EvalError("malformed expression tree");
}

}  // namespace deqn
