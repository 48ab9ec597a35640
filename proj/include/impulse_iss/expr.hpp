#pragma once

// Scalar expression DSL: parser, evaluator, forward-mode derivatives.
//
// Grammar (precedence low to high):
//   expr   := term  (('+'|'-') term)*          left assoc
//   term   := unary (('*'|'/') unary)*         left assoc
//   unary  := '-' unary | power
//   power  := atom ('^' unary)?                right assoc, binds tighter than unary '-'
//   atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//
// Known calls: abs, exp, ln, sqrt, min, max, pow, sin, cos, tanh.
// All arithmetic is IEEE binary64. Domain violations (ln/sqrt of a negative
// number, division by zero) raise EvalError instead of propagating NaN.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace impiss {

using Bindings = std::map<std::string, double, std::less<>>;

struct ParseError : std::runtime_error {
  std::size_t position;
  ParseError(const std::string& msg, std::size_t pos)
      : std::runtime_error(msg + " (at position " + std::to_string(pos) + ")"),
        position(pos) {}
};

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class NodeKind : std::uint8_t {
  Num, Var, Neg, Add, Sub, Mul, Div, Pow,
  Abs, Exp, Ln, Sqrt, Min, Max, Sin, Cos, Tanh
};

struct GradResult {
  double value = 0.0;
  std::vector<double> gradient;
  bool nonsmooth = false;  // a kink of abs/min/max (or sqrt at 0) was hit
};

// Immutable AST stored as a flat arena in evaluation (postfix) order:
// children always precede their parent, so a single forward sweep evaluates
// the whole tree without recursion.
class Expr {
 public:
  struct Node {
    NodeKind kind;
    double num = 0.0;   // Num payload
    int var = -1;       // Var payload: index into vars_
    int a = -1, b = -1; // child node indices
  };

  static Expr parse(std::string_view text);

  const std::vector<std::string>& vars() const { return vars_; }
  std::size_t node_count() const { return nodes_.size(); }

  double eval(const Bindings& env) const {
    std::vector<double> vals = gather(env);
    std::vector<double> scratch;
    return eval_indexed(vals, scratch);
  }

  // values[i] binds vars()[i]; scratch is reused storage sized to the arena.
  double eval_indexed(std::span<const double> values,
                      std::vector<double>& scratch) const;

  // Maps each of vars() to its index in global_names (throws if absent).
  std::vector<int> bind_slots(std::span<const std::string> global_names) const;

  double eval_slotted(std::span<const double> global_values,
                      std::span<const int> slots,
                      std::vector<double>& scratch) const {
    small_gather_.resize(vars_.size());
    for (std::size_t i = 0; i < vars_.size(); ++i)
      small_gather_[i] = global_values[static_cast<std::size_t>(slots[i])];
    return eval_indexed(small_gather_, scratch);
  }

  // Value plus exact forward-mode partials w.r.t. the named variables.
  // Variables in `wrt` that do not occur in the expression get derivative 0.
  GradResult eval_with_gradient(const Bindings& env,
                                std::span<const std::string> wrt) const;

  // Canonical fully parenthesized text; parse(unparse()) reproduces the tree.
  std::string unparse() const;

  bool structurally_equal(const Expr& other) const;

 private:
  std::vector<double> gather(const Bindings& env) const {
    std::vector<double> vals(vars_.size());
    for (std::size_t i = 0; i < vars_.size(); ++i) {
      auto it = env.find(vars_[i]);
      if (it == env.end())
        throw EvalError("unbound variable '" + vars_[i] + "'");
      vals[i] = it->second;
    }
    return vals;
  }

  void unparse_node(int idx, std::string& out) const;

  std::vector<Node> nodes_;
  int root_ = -1;
  std::vector<std::string> vars_;
  mutable std::vector<double> small_gather_;

  friend class Parser;
};

namespace detail {

inline bool is_ident_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}
inline bool is_ident_char(char c) {
  return is_ident_start(c) || (c >= '0' && c <= '9');
}

}  // namespace detail

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  Expr run() {
    Expr e;
    e.root_ = parse_expr(e);
    skip_ws();
    if (pos_ != text_.size())
      throw ParseError("unexpected trailing input '" +
                           std::string(1, text_[pos_]) + "'",
                       pos_);
    if (e.root_ < 0) throw ParseError("empty expression", 0);
    return e;
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;

  void skip_ws() {
    while (pos_ < text_.size() &&
           (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n' ||
            text_[pos_] == '\r'))
      ++pos_;
  }

  bool peek(char c) {
    skip_ws();
    return pos_ < text_.size() && text_[pos_] == c;
  }

  bool accept(char c) {
    if (peek(c)) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c))
      throw ParseError(std::string("expected '") + c + "'", pos_);
  }

  int push(Expr& e, Expr::Node n) {
    e.nodes_.push_back(n);
    return static_cast<int>(e.nodes_.size()) - 1;
  }

  int parse_expr(Expr& e) {
    int lhs = parse_term(e);
    for (;;) {
      if (accept('+'))
        lhs = push(e, {NodeKind::Add, 0, -1, lhs, parse_term(e)});
      else if (accept('-'))
        lhs = push(e, {NodeKind::Sub, 0, -1, lhs, parse_term(e)});
      else
        return lhs;
    }
  }

  int parse_term(Expr& e) {
    int lhs = parse_unary(e);
    for (;;) {
      if (accept('*'))
        lhs = push(e, {NodeKind::Mul, 0, -1, lhs, parse_unary(e)});
      else if (accept('/'))
        lhs = push(e, {NodeKind::Div, 0, -1, lhs, parse_unary(e)});
      else
        return lhs;
    }
  }

  int parse_unary(Expr& e) {
    if (accept('-'))
      return push(e, {NodeKind::Neg, 0, -1, parse_unary(e), -1});
    return parse_power(e);
  }

  int parse_power(Expr& e) {
    int base = parse_atom(e);
    if (accept('^'))
      return push(e, {NodeKind::Pow, 0, -1, base, parse_unary(e)});
    return base;
  }

  int parse_atom(Expr& e) {
    skip_ws();
    if (pos_ >= text_.size()) throw ParseError("unexpected end of input", pos_);
    char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      int inner = parse_expr(e);
      expect(')');
      return inner;
    }
    if ((c >= '0' && c <= '9') || c == '.') return parse_number(e);
    if (detail::is_ident_start(c)) return parse_ident(e);
    throw ParseError(std::string("unexpected token '") + c + "'", pos_);
  }

  int parse_number(Expr& e) {
    std::size_t start = pos_;
    while (pos_ < text_.size() &&
           ((text_[pos_] >= '0' && text_[pos_] <= '9') || text_[pos_] == '.'))
      ++pos_;
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t mark = pos_++;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-'))
        ++pos_;
      if (pos_ < text_.size() && text_[pos_] >= '0' && text_[pos_] <= '9') {
        while (pos_ < text_.size() && text_[pos_] >= '0' && text_[pos_] <= '9')
          ++pos_;
      } else {
        pos_ = mark;  // 'e' belonged to something else
      }
    }
    std::string tok(text_.substr(start, pos_ - start));
    try {
      std::size_t used = 0;
      double v = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      Expr::Node n{NodeKind::Num, v, -1, -1, -1};
      return push(e, n);
    } catch (const std::exception&) {
      throw ParseError("malformed number '" + tok + "'", start);
    }
  }

  int parse_ident(Expr& e) {
    std::size_t start = pos_;
    while (pos_ < text_.size() && detail::is_ident_char(text_[pos_])) ++pos_;
    std::string name(text_.substr(start, pos_ - start));
    if (peek('(')) return parse_call(e, name, start);
    // variable reference, interned
    int idx = -1;
    for (std::size_t i = 0; i < e.vars_.size(); ++i)
      if (e.vars_[i] == name) idx = static_cast<int>(i);
    if (idx < 0) {
      e.vars_.push_back(name);
      idx = static_cast<int>(e.vars_.size()) - 1;
    }
    return push(e, {NodeKind::Var, 0, idx, -1, -1});
  }

  int parse_call(Expr& e, const std::string& name, std::size_t start) {
    struct Fn { const char* name; NodeKind kind; int arity; };
    static constexpr Fn fns[] = {
        {"abs", NodeKind::Abs, 1},  {"exp", NodeKind::Exp, 1},
        {"ln", NodeKind::Ln, 1},    {"sqrt", NodeKind::Sqrt, 1},
        {"min", NodeKind::Min, 2},  {"max", NodeKind::Max, 2},
        {"pow", NodeKind::Pow, 2},  {"sin", NodeKind::Sin, 1},
        {"cos", NodeKind::Cos, 1},  {"tanh", NodeKind::Tanh, 1},
    };
    const Fn* fn = nullptr;
    for (const Fn& f : fns)
      if (name == f.name) fn = &f;
    if (!fn) throw ParseError("unknown function '" + name + "'", start);
    expect('(');
    std::vector<int> args;
    args.push_back(parse_expr(e));
    while (accept(',')) args.push_back(parse_expr(e));
    expect(')');
    if (static_cast<int>(args.size()) != fn->arity)
      throw ParseError("function '" + name + "' expects " +
                           std::to_string(fn->arity) + " argument(s), got " +
                           std::to_string(args.size()),
                       start);
    Expr::Node n{fn->kind, 0, -1, args[0], args.size() > 1 ? args[1] : -1};
    return push(e, n);
  }
};

inline Expr Expr::parse(std::string_view text) { return Parser(text).run(); }

inline std::vector<int> Expr::bind_slots(
    std::span<const std::string> global_names) const {
  std::vector<int> slots(vars_.size(), -1);
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    for (std::size_t j = 0; j < global_names.size(); ++j)
      if (global_names[j] == vars_[i]) slots[i] = static_cast<int>(j);
    if (slots[i] < 0)
      throw EvalError("unknown variable '" + vars_[i] + "'");
  }
  return slots;
}

inline double Expr::eval_indexed(std::span<const double> values,
                                 std::vector<double>& scratch) const {
  if (values.size() != vars_.size())
    throw EvalError("binding count mismatch");
  scratch.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    const double a = n.a >= 0 ? scratch[static_cast<std::size_t>(n.a)] : 0.0;
    const double b = n.b >= 0 ? scratch[static_cast<std::size_t>(n.b)] : 0.0;
    double v;
    switch (n.kind) {
      case NodeKind::Num: v = n.num; break;
      case NodeKind::Var: v = values[static_cast<std::size_t>(n.var)]; break;
      case NodeKind::Neg: v = -a; break;
      case NodeKind::Add: v = a + b; break;
      case NodeKind::Sub: v = a - b; break;
      case NodeKind::Mul: v = a * b; break;
      case NodeKind::Div:
        if (b == 0.0) throw EvalError("division by zero");
        v = a / b;
        break;
      case NodeKind::Pow:
        v = std::pow(a, b);
        if (!std::isfinite(v)) {
          if (a == 0.0 && b < 0.0) throw EvalError("0 raised to negative power");
          if (std::isnan(v)) throw EvalError("domain error in pow");
        }
        break;
      case NodeKind::Abs: v = std::fabs(a); break;
      case NodeKind::Exp: v = std::exp(a); break;
      case NodeKind::Ln:
        if (a <= 0.0) throw EvalError("ln of non-positive argument");
        v = std::log(a);
        break;
      case NodeKind::Sqrt:
        if (a < 0.0) throw EvalError("sqrt of negative argument");
        v = std::sqrt(a);
        break;
      case NodeKind::Min: v = std::fmin(a, b); break;
      case NodeKind::Max: v = std::fmax(a, b); break;
      case NodeKind::Sin: v = std::sin(a); break;
      case NodeKind::Cos: v = std::cos(a); break;
      case NodeKind::Tanh: v = std::tanh(a); break;
      default: throw EvalError("corrupt AST");
    }
    scratch[i] = v;
  }
  return scratch[static_cast<std::size_t>(root_)];
}

inline GradResult Expr::eval_with_gradient(
    const Bindings& env, std::span<const std::string> wrt) const {
  const std::size_t k = wrt.size();
  std::vector<double> vals = gather(env);
  // seed directions: d(vars_[i]) = e_j when vars_[i] == wrt[j]
  std::vector<std::vector<double>> seed(vars_.size(),
                                        std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < vars_.size(); ++i)
    for (std::size_t j = 0; j < k; ++j)
      if (vars_[i] == wrt[j]) seed[i][j] = 1.0;

  std::vector<double> val(nodes_.size());
  std::vector<std::vector<double>> der(nodes_.size());
  GradResult out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    const std::size_t ia = static_cast<std::size_t>(n.a);
    const std::size_t ib = static_cast<std::size_t>(n.b);
    const double a = n.a >= 0 ? val[ia] : 0.0;
    const double b = n.b >= 0 ? val[ib] : 0.0;
    double v = 0.0;
    std::vector<double> d(k, 0.0);
    auto comb = [&](double wa, double wb) {
      for (std::size_t j = 0; j < k; ++j) {
        double t = 0.0;
        if (n.a >= 0) t += wa * der[ia][j];
        if (n.b >= 0) t += wb * der[ib][j];
        d[j] = t;
      }
    };
    switch (n.kind) {
      case NodeKind::Num: v = n.num; break;
      case NodeKind::Var:
        v = vals[static_cast<std::size_t>(n.var)];
        d = seed[static_cast<std::size_t>(n.var)];
        break;
      case NodeKind::Neg: v = -a; comb(-1.0, 0.0); break;
      case NodeKind::Add: v = a + b; comb(1.0, 1.0); break;
      case NodeKind::Sub: v = a - b; comb(1.0, -1.0); break;
      case NodeKind::Mul: v = a * b; comb(b, a); break;
      case NodeKind::Div:
        if (b == 0.0) throw EvalError("division by zero");
        v = a / b;
        comb(1.0 / b, -a / (b * b));
        break;
      case NodeKind::Pow: {
        v = std::pow(a, b);
        if (std::isnan(v)) throw EvalError("domain error in pow");
        bool b_const = true;
        for (std::size_t j = 0; j < k; ++j)
          if (der[ib][j] != 0.0) b_const = false;
        if (b_const) {
          comb(b * std::pow(a, b - 1.0), 0.0);
        } else {
          if (a <= 0.0)
            throw EvalError("derivative of pow needs positive base when the "
                            "exponent varies");
          comb(v * b / a, v * std::log(a));
        }
        break;
      }
      case NodeKind::Abs:
        v = std::fabs(a);
        if (a == 0.0) out.nonsmooth = true;  // right-hand derivative: +1
        comb(a < 0.0 ? -1.0 : 1.0, 0.0);
        break;
      case NodeKind::Exp: v = std::exp(a); comb(v, 0.0); break;
      case NodeKind::Ln:
        if (a <= 0.0) throw EvalError("ln of non-positive argument");
        v = std::log(a);
        comb(1.0 / a, 0.0);
        break;
      case NodeKind::Sqrt:
        if (a < 0.0) throw EvalError("sqrt of negative argument");
        v = std::sqrt(a);
        if (a == 0.0) out.nonsmooth = true;
        comb(a == 0.0 ? std::numeric_limits<double>::infinity()
                      : 0.5 / v,
             0.0);
        break;
      case NodeKind::Min:
        v = std::fmin(a, b);
        if (a == b) {
          out.nonsmooth = true;  // right-hand: the smaller slope wins
          for (std::size_t j = 0; j < k; ++j)
            d[j] = std::fmin(der[ia][j], der[ib][j]);
        } else {
          comb(a < b ? 1.0 : 0.0, a < b ? 0.0 : 1.0);
        }
        break;
      case NodeKind::Max:
        v = std::fmax(a, b);
        if (a == b) {
          out.nonsmooth = true;
          for (std::size_t j = 0; j < k; ++j)
            d[j] = std::fmax(der[ia][j], der[ib][j]);
        } else {
          comb(a > b ? 1.0 : 0.0, a > b ? 0.0 : 1.0);
        }
        break;
      case NodeKind::Sin: v = std::sin(a); comb(std::cos(a), 0.0); break;
      case NodeKind::Cos: v = std::cos(a); comb(-std::sin(a), 0.0); break;
      case NodeKind::Tanh:
        v = std::tanh(a);
        comb(1.0 - v * v, 0.0);
        break;
      default: throw EvalError("corrupt AST");
    }
    val[i] = v;
    der[i] = std::move(d);
  }
  out.value = val[static_cast<std::size_t>(root_)];
  out.gradient = der[static_cast<std::size_t>(root_)];
  return out;
}

inline void Expr::unparse_node(int idx, std::string& out) const {
  const Node& n = nodes_[static_cast<std::size_t>(idx)];
  auto bin = [&](const char* op) {
    out += '(';
    unparse_node(n.a, out);
    out += op;
    unparse_node(n.b, out);
    out += ')';
  };
  auto call1 = [&](const char* name) {
    out += name;
    out += '(';
    unparse_node(n.a, out);
    out += ')';
  };
  auto call2 = [&](const char* name) {
    out += name;
    out += '(';
    unparse_node(n.a, out);
    out += ", ";
    unparse_node(n.b, out);
    out += ')';
  };
  switch (n.kind) {
    case NodeKind::Num: {
      std::ostringstream ss;
      ss.precision(17);
      ss << n.num;
      std::string s = ss.str();
      if (s.find('-') != std::string::npos && s[0] == '-') {
        out += '(';
        out += s;
        out += ')';
      } else {
        out += s;
      }
      break;
    }
    case NodeKind::Var: out += vars_[static_cast<std::size_t>(n.var)]; break;
    case NodeKind::Neg:
      out += "(-";
      unparse_node(n.a, out);
      out += ')';
      break;
    case NodeKind::Add: bin(" + "); break;
    case NodeKind::Sub: bin(" - "); break;
    case NodeKind::Mul: bin(" * "); break;
    case NodeKind::Div: bin(" / "); break;
    case NodeKind::Pow: bin(" ^ "); break;
    case NodeKind::Abs: call1("abs"); break;
    case NodeKind::Exp: call1("exp"); break;
    case NodeKind::Ln: call1("ln"); break;
    case NodeKind::Sqrt: call1("sqrt"); break;
    case NodeKind::Min: call2("min"); break;
    case NodeKind::Max: call2("max"); break;
    case NodeKind::Sin: call1("sin"); break;
    case NodeKind::Cos: call1("cos"); break;
    case NodeKind::Tanh: call1("tanh"); break;
  }
}

inline std::string Expr::unparse() const {
  std::string out;
  unparse_node(root_, out);
  return out;
}

inline bool Expr::structurally_equal(const Expr& other) const {
  // Compare trees from the roots; arena layout may differ.
  struct Cmp {
    const Expr& x;
    const Expr& y;
    bool eq(int i, int j) const {
      const Node& a = x.nodes_[static_cast<std::size_t>(i)];
      const Node& b = y.nodes_[static_cast<std::size_t>(j)];
      if (a.kind != b.kind) return false;
      if (a.kind == NodeKind::Num) return a.num == b.num;
      if (a.kind == NodeKind::Var)
        return x.vars_[static_cast<std::size_t>(a.var)] ==
               y.vars_[static_cast<std::size_t>(b.var)];
      if ((a.a >= 0) != (b.a >= 0) || (a.b >= 0) != (b.b >= 0)) return false;
      if (a.a >= 0 && !eq(a.a, b.a)) return false;
      if (a.b >= 0 && !eq(a.b, b.b)) return false;
      return true;
    }
  };
  return Cmp{*this, other}.eq(root_, other.root_);
}

}  // namespace impiss
