#pragma once

// Small arithmetic expression language for user-supplied fields.
//
// Grammar (whitespace ignored):
//
//   expr    := term   (('+' | '-') term)*
//   term    := unary  (('*' | '/') unary)*
//   unary   := ('-' | '+') unary | power
//   power   := primary ('^' unary)?          right associative
//   primary := number | 'x'k | 'pi' | 'e' | func '(' expr ')' | '(' expr ')'
//   func    := sin | cos | exp | log | sqrt | tanh
//
// Variables are x1 .. xn (1-based). Binding strength is
// power > unary minus > (* /) > (+ -); binary operators other than '^' are
// left associative, so "1 + 2*3" is 7 and "-x1^2" is -(x1^2).

#include "maxprin/core.hpp"
#include "maxprin/jet.hpp"

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace maxprin::expr {

enum class Op : std::uint8_t { Const, Var, Neg, Add, Sub, Mul, Div, Pow, Sin, Cos, Exp, Log, Sqrt, Tanh };

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  Op op = Op::Const;
  double value = 0.0;
  int var = -1;
  NodePtr lhs;
  NodePtr rhs;
};

inline const char* function_name(Op op) {
  switch (op) {
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sqrt: return "sqrt";
    case Op::Tanh: return "tanh";
    default: return nullptr;
  }
}

namespace detail {

inline NodePtr make_const(double c) {
  auto n = std::make_shared<Node>();
  n->op = Op::Const;
  n->value = c;
  return n;
}

inline NodePtr make_var(int i) {
  auto n = std::make_shared<Node>();
  n->op = Op::Var;
  n->var = i;
  return n;
}

inline NodePtr make_node(Op op, NodePtr a, NodePtr b = nullptr) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->lhs = std::move(a);
  n->rhs = std::move(b);
  return n;
}

inline bool is_const(const NodePtr& n) { return n->op == Op::Const; }
inline bool is_const(const NodePtr& n, double c) { return n->op == Op::Const && n->value == c; }

inline bool is_integer(double x) { return std::isfinite(x) && std::floor(x) == x; }

// Constant folding; a fold is skipped when it would leave the real domain so
// the error surfaces at evaluation time.
inline NodePtr fold_unary(Op op, const NodePtr& a) {
  if (!is_const(a)) return nullptr;
  const double x = a->value;
  double r = 0.0;
  switch (op) {
    case Op::Neg: r = -x; break;
    case Op::Sin: r = std::sin(x); break;
    case Op::Cos: r = std::cos(x); break;
    case Op::Exp: r = std::exp(x); break;
    case Op::Log:
      if (x <= 0.0) return nullptr;
      r = std::log(x);
      break;
    case Op::Sqrt:
      if (x < 0.0) return nullptr;
      r = std::sqrt(x);
      break;
    case Op::Tanh: r = std::tanh(x); break;
    default: return nullptr;
  }
  return std::isfinite(r) ? make_const(r) : nullptr;
}

inline NodePtr neg(const NodePtr& a) {
  if (auto f = fold_unary(Op::Neg, a)) return f;
  if (a->op == Op::Neg) return a->lhs;
  return make_node(Op::Neg, a);
}

inline NodePtr add(const NodePtr& a, const NodePtr& b) {
  if (is_const(a) && is_const(b)) return make_const(a->value + b->value);
  if (is_const(a, 0.0)) return b;
  if (is_const(b, 0.0)) return a;
  return make_node(Op::Add, a, b);
}

inline NodePtr sub(const NodePtr& a, const NodePtr& b) {
  if (is_const(a) && is_const(b)) return make_const(a->value - b->value);
  if (is_const(b, 0.0)) return a;
  if (is_const(a, 0.0)) return neg(b);
  return make_node(Op::Sub, a, b);
}

inline NodePtr mul(const NodePtr& a, const NodePtr& b) {
  if (is_const(a) && is_const(b)) return make_const(a->value * b->value);
  if (is_const(a, 0.0) || is_const(b, 0.0)) return make_const(0.0);
  if (is_const(a, 1.0)) return b;
  if (is_const(b, 1.0)) return a;
  if (is_const(a, -1.0)) return neg(b);
  if (is_const(b, -1.0)) return neg(a);
  return make_node(Op::Mul, a, b);
}

inline NodePtr div(const NodePtr& a, const NodePtr& b) {
  if (is_const(a) && is_const(b) && b->value != 0.0) return make_const(a->value / b->value);
  if (is_const(b, 1.0)) return a;
  if (is_const(a, 0.0) && !is_const(b, 0.0)) return make_const(0.0);
  return make_node(Op::Div, a, b);
}

inline NodePtr pow(const NodePtr& a, const NodePtr& b) {
  if (is_const(a) && is_const(b)) {
    const double x = a->value;
    const double y = b->value;
    const bool ok = (x > 0.0) || (x == 0.0 && y >= 0.0) || (x < 0.0 && is_integer(y));
    if (ok) {
      const double r = std::pow(x, y);
      if (std::isfinite(r)) return make_const(r);
    }
  }
  if (is_const(b, 1.0)) return a;
  if (is_const(b, 0.0)) return make_const(1.0);
  return make_node(Op::Pow, a, b);
}

inline NodePtr func(Op op, const NodePtr& a) {
  if (auto f = fold_unary(op, a)) return f;
  return make_node(op, a);
}

inline NodePtr derivative(const NodePtr& e, int k) {
  switch (e->op) {
    case Op::Const: return make_const(0.0);
    case Op::Var: return make_const(e->var == k ? 1.0 : 0.0);
    case Op::Neg: return neg(derivative(e->lhs, k));
    case Op::Add: return add(derivative(e->lhs, k), derivative(e->rhs, k));
    case Op::Sub: return sub(derivative(e->lhs, k), derivative(e->rhs, k));
    case Op::Mul:
      return add(mul(derivative(e->lhs, k), e->rhs), mul(e->lhs, derivative(e->rhs, k)));
    case Op::Div: {
      const NodePtr num =
          sub(mul(derivative(e->lhs, k), e->rhs), mul(e->lhs, derivative(e->rhs, k)));
      return div(num, mul(e->rhs, e->rhs));
    }
    case Op::Pow: {
      const NodePtr& a = e->lhs;
      const NodePtr& b = e->rhs;
      const NodePtr da = derivative(a, k);
      const NodePtr db = derivative(b, k);
      if (is_const(db, 0.0)) {
        // b independent of x_k
        return mul(mul(b, pow(a, sub(b, make_const(1.0)))), da);
      }
      if (is_const(da, 0.0)) return mul(mul(e, func(Op::Log, a)), db);
      return mul(e, add(mul(db, func(Op::Log, a)), div(mul(b, da), a)));
    }
    case Op::Sin: return mul(func(Op::Cos, e->lhs), derivative(e->lhs, k));
    case Op::Cos: return neg(mul(func(Op::Sin, e->lhs), derivative(e->lhs, k)));
    case Op::Exp: return mul(e, derivative(e->lhs, k));
    case Op::Log: return div(derivative(e->lhs, k), e->lhs);
    case Op::Sqrt: return div(derivative(e->lhs, k), mul(make_const(2.0), e));
    case Op::Tanh:
      return mul(sub(make_const(1.0), mul(e, e)), derivative(e->lhs, k));
  }
  return make_const(0.0);
}

inline std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void print(const Node& n, std::string& out) {
  switch (n.op) {
    case Op::Const:
      if (n.value < 0.0 || (n.value == 0.0 && std::signbit(n.value))) {
        out += "(-";
        out += format_number(-n.value);
        out += ")";
      } else {
        out += format_number(n.value);
      }
      return;
    case Op::Var:
      out += "x" + std::to_string(n.var + 1);
      return;
    case Op::Neg:
      out += "(-";
      print(*n.lhs, out);
      out += ")";
      return;
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div:
    case Op::Pow: {
      const char* sym = n.op == Op::Add   ? " + "
                        : n.op == Op::Sub ? " - "
                        : n.op == Op::Mul ? " * "
                        : n.op == Op::Div ? " / "
                                          : " ^ ";
      out += "(";
      print(*n.lhs, out);
      out += sym;
      print(*n.rhs, out);
      out += ")";
      return;
    }
    default:
      out += function_name(n.op);
      out += "(";
      print(*n.lhs, out);
      out += ")";
      return;
  }
}

class Parser {
 public:
  Parser(std::string_view src, int dim) : src_(src), dim_(dim) {}

  NodePtr parse() {
    NodePtr e = parse_expr();
    skip_ws();
    if (pos_ != src_.size()) fail("unexpected character '" + std::string(1, src_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, pos_); }

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr parse_expr() {
    NodePtr lhs = parse_term();
    for (;;) {
      if (accept('+')) {
        lhs = add(lhs, parse_term());
      } else if (accept('-')) {
        lhs = sub(lhs, parse_term());
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_term() {
    NodePtr lhs = parse_unary();
    for (;;) {
      if (accept('*')) {
        lhs = mul(lhs, parse_unary());
      } else if (accept('/')) {
        lhs = div(lhs, parse_unary());
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_unary() {
    if (accept('-')) return neg(parse_unary());
    if (accept('+')) return parse_unary();
    return parse_power();
  }

  NodePtr parse_power() {
    NodePtr base = parse_primary();
    if (accept('^')) return pow(base, parse_unary());
    return base;
  }

  NodePtr parse_primary() {
    skip_ws();
    if (pos_ >= src_.size()) fail("unexpected end of input");
    const char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_identifier();
    if (c == '(') {
      ++pos_;
      NodePtr e = parse_expr();
      if (!accept(')')) fail("expected ')'");
      return e;
    }
    fail("unexpected character '" + std::string(1, c) + "'");
  }

  NodePtr parse_number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      std::size_t count = 0;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        ++pos_;
        ++count;
      }
      return count;
    };
    std::size_t mantissa = digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      mantissa += digits();
    }
    if (mantissa == 0) {
      pos_ = start;
      fail("malformed number");
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      const std::size_t save = pos_;
      ++pos_;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (digits() == 0) pos_ = save;  // "2e" is 2 followed by the constant e
    }
    const std::string text(src_.substr(start, pos_ - start));
    return make_const(std::stod(text));
  }

  NodePtr parse_identifier() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
      ++pos_;
    const std::string_view id = src_.substr(start, pos_ - start);

    static constexpr std::pair<std::string_view, Op> kFunctions[] = {
        {"sin", Op::Sin}, {"cos", Op::Cos},   {"exp", Op::Exp},
        {"log", Op::Log}, {"sqrt", Op::Sqrt}, {"tanh", Op::Tanh}};
    for (const auto& [name, op] : kFunctions) {
      if (id == name) {
        if (!accept('(')) fail("expected '(' after function " + std::string(name));
        NodePtr arg = parse_expr();
        if (!accept(')')) fail("expected ')'");
        return func(op, arg);
      }
    }
    if (id == "pi") return make_const(std::numbers::pi);
    if (id == "e") return make_const(std::numbers::e);
    if (id.size() >= 2 && id[0] == 'x') {
      bool numeric = true;
      for (std::size_t i = 1; i < id.size(); ++i)
        numeric = numeric && std::isdigit(static_cast<unsigned char>(id[i]));
      if (numeric && id[1] != '0') {
        const int k = std::stoi(std::string(id.substr(1)));
        if (k >= 1 && k <= dim_) return make_var(k - 1);
      }
    }
    pos_ = start;
    fail("unknown identifier '" + std::string(id) + "'");
  }

  std::string_view src_;
  int dim_;
  std::size_t pos_ = 0;
};

template <class T>
T eval(const Node& nd, std::span<const T> x, int n) {
  using std::cos;
  using std::exp;
  using std::log;
  using std::sin;
  using std::sqrt;
  using std::tanh;
  switch (nd.op) {
    case Op::Const: return ScalarTraits<T>::constant(nd.value, n);
    case Op::Var:
      if (nd.var >= static_cast<int>(x.size()))
        throw DomainError("variable x" + std::to_string(nd.var + 1) + " outside the point dimension");
      return x[static_cast<std::size_t>(nd.var)];
    case Op::Neg: return -eval(*nd.lhs, x, n);
    case Op::Add: return eval(*nd.lhs, x, n) + eval(*nd.rhs, x, n);
    case Op::Sub: return eval(*nd.lhs, x, n) - eval(*nd.rhs, x, n);
    case Op::Mul: return eval(*nd.lhs, x, n) * eval(*nd.rhs, x, n);
    case Op::Div: {
      const T b = eval(*nd.rhs, x, n);
      if (value_of(b) == 0.0) throw DomainError("division by zero");
      return eval(*nd.lhs, x, n) / b;
    }
    case Op::Pow: {
      const T a = eval(*nd.lhs, x, n);
      const double av = value_of(a);
      if (nd.rhs->op == Op::Const) {
        const double c = nd.rhs->value;
        if (av < 0.0 && !is_integer(c)) throw DomainError("negative base with non-integer exponent");
        if (av == 0.0 && c < 0.0) throw DomainError("zero raised to a negative power");
        if constexpr (!std::is_same_v<T, double>) {
          if (av == 0.0 && !is_integer(c) && c < 2.0)
            throw DomainError("power is not differentiable at zero base");
        }
        using std::pow;
        return pow(a, c);
      }
      const T b = eval(*nd.rhs, x, n);
      if constexpr (std::is_same_v<T, double>) {
        if (av < 0.0 && !is_integer(b)) throw DomainError("negative base with non-integer exponent");
        if (av == 0.0 && b < 0.0) throw DomainError("zero raised to a negative power");
        return std::pow(a, b);
      } else {
        if (av <= 0.0) throw DomainError("variable exponent requires a positive base");
        return pow(a, b);
      }
    }
    case Op::Sin: return sin(eval(*nd.lhs, x, n));
    case Op::Cos: return cos(eval(*nd.lhs, x, n));
    case Op::Exp: return exp(eval(*nd.lhs, x, n));
    case Op::Log: {
      const T a = eval(*nd.lhs, x, n);
      if (value_of(a) <= 0.0) throw DomainError("log of non-positive value");
      return log(a);
    }
    case Op::Sqrt: {
      const T a = eval(*nd.lhs, x, n);
      const double av = value_of(a);
      if (av < 0.0) throw DomainError("sqrt of negative value");
      if constexpr (!std::is_same_v<T, double>) {
        if (av == 0.0) throw DomainError("sqrt is not differentiable at zero");
      }
      return sqrt(a);
    }
    case Op::Tanh: return tanh(eval(*nd.lhs, x, n));
  }
  throw DomainError("corrupt expression node");
}

inline int max_var(const Node& n) {
  int m = n.op == Op::Var ? n.var + 1 : 0;
  if (n.lhs) m = std::max(m, max_var(*n.lhs));
  if (n.rhs) m = std::max(m, max_var(*n.rhs));
  return m;
}

}  // namespace detail

/// Immutable expression tree. Copies share structure; evaluation is pure.
class Expression {
 public:
  Expression() : root_(detail::make_const(0.0)) {}
  explicit Expression(NodePtr root) : root_(std::move(root)) {}

  static Expression constant(double c) { return Expression(detail::make_const(c)); }
  static Expression variable(int index) { return Expression(detail::make_var(index)); }

  /// Parses `source`; identifiers x1..x`dim` are accepted.
  static Expression parse(std::string_view source, int dim = kMaxDim) {
    return Expression(detail::Parser(source, dim).parse());
  }

  template <class T>
  T evaluate(std::span<const T> x) const {
    const int n = x.empty() ? 0 : static_cast<int>(x.size());
    T r = detail::eval(*root_, x, n);
    if (!jet_is_finite(r)) throw DomainError("expression evaluated to a non-finite value");
    return r;
  }

  double operator()(std::span<const double> x) const { return evaluate<double>(x); }
  double operator()(const Vec& x) const { return evaluate<double>({x.data(), static_cast<std::size_t>(x.size())}); }

  template <int O>
  Jet<O> jet(const Vec& x) const {
    const int n = static_cast<int>(x.size());
    std::array<Jet<O>, kMaxDim> vars;
    for (int i = 0; i < n; ++i) vars[static_cast<std::size_t>(i)] = Jet<O>::variable(n, i, x(i));
    return evaluate<Jet<O>>(std::span<const Jet<O>>(vars.data(), static_cast<std::size_t>(n)));
  }

  /// Exact symbolic partial derivative with respect to x_{var_index+1}.
  Expression derivative(int var_index) const { return Expression(detail::derivative(root_, var_index)); }

  std::string to_string() const {
    std::string out;
    detail::print(*root_, out);
    return out;
  }

  bool is_constant() const { return root_->op == Op::Const; }
  double constant_value() const { return root_->value; }
  int variables_used() const { return detail::max_var(*root_); }
  const Node& root() const { return *root_; }

  friend Expression operator+(const Expression& a, const Expression& b) { return Expression(detail::add(a.root_, b.root_)); }
  friend Expression operator-(const Expression& a, const Expression& b) { return Expression(detail::sub(a.root_, b.root_)); }
  friend Expression operator*(const Expression& a, const Expression& b) { return Expression(detail::mul(a.root_, b.root_)); }
  friend Expression operator/(const Expression& a, const Expression& b) { return Expression(detail::div(a.root_, b.root_)); }
  friend Expression operator-(const Expression& a) { return Expression(detail::neg(a.root_)); }
  friend Expression pow(const Expression& a, const Expression& b) { return Expression(detail::pow(a.root_, b.root_)); }
  friend Expression apply(Op fn, const Expression& a) { return Expression(detail::func(fn, a.root_)); }

 private:
  NodePtr root_;
};

// Comma-separated component list; commas inside parentheses do not split.
inline std::vector<Expression> parse_list(std::string_view source, int dim = kMaxDim) {
  std::vector<Expression> out;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= source.size(); ++i) {
    const bool end = i == source.size();
    const char c = end ? ',' : source[i];
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == ',' && depth == 0) {
      try {
        out.push_back(Expression::parse(source.substr(start, i - start), dim));
      } catch (const ParseError& e) {
        throw ParseError(std::string(e.what()).substr(std::string(e.what()).find(':') + 2),
                         start + e.offset());
      }
      start = i + 1;
    }
  }
  return out;
}

}  // namespace maxprin::expr
