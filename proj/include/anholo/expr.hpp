#pragma once
// A small closed-form expression language: literals, names, + - * /, unary
// minus, pow(e, integer) and sin cos tan exp log sqrt. Expressions are parsed
// once, bound against a set of variable and parameter names, and evaluated
// for any scalar type (double or nested jets).

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "anholo/errors.hpp"
#include "anholo/jet.hpp"

namespace anholo {

enum class Op : std::uint8_t {
  Number,
  Name,  // unresolved identifier
  Var,
  Param,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Pow,
  Sin,
  Cos,
  Tan,
  Exp,
  Log,
  Sqrt,
};

struct ExprNode {
  Op op = Op::Number;
  int lhs = -1;  // child indices; children always precede their parent
  int rhs = -1;
  double number = 0.0;
  int exponent = 0;
  int slot = -1;
  std::string name;
  std::size_t line = 1;
  std::size_t column = 1;
};

/// Names an expression may refer to, resolved to positional slots.
struct Declarations {
  std::vector<std::string> variables;
  std::vector<std::string> params;
};

class Expr {
 public:
  Expr() = default;
  Expr(std::vector<ExprNode> nodes, std::string source)
      : nodes_(std::make_shared<const std::vector<ExprNode>>(std::move(nodes))),
        source_(std::make_shared<const std::string>(std::move(source))) {}

  bool empty() const { return !nodes_ || nodes_->empty(); }
  const std::vector<ExprNode>& nodes() const { return *nodes_; }
  const std::string& source() const { return *source_; }

  bool is_bound() const {
    for (const auto& n : *nodes_)
      if (n.op == Op::Name) return false;
    return true;
  }

  /// Evaluates a bound expression. vars and params are indexed by the slots
  /// assigned in bind().
  template <class T>
  T eval(std::span<const T> vars, std::span<const double> params) const;

 private:
  std::shared_ptr<const std::vector<ExprNode>> nodes_;
  std::shared_ptr<const std::string> source_;
};

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

enum class Tok { Number, Ident, Plus, Minus, Star, Slash, LParen, RParen, Comma, End, Bad };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  double number = 0.0;
  std::size_t line = 1;
  std::size_t column = 1;
};

inline const char* token_name(Tok t) {
  switch (t) {
    case Tok::Number: return "number";
    case Tok::Ident: return "identifier";
    case Tok::Plus: return "'+'";
    case Tok::Minus: return "'-'";
    case Tok::Star: return "'*'";
    case Tok::Slash: return "'/'";
    case Tok::LParen: return "'('";
    case Tok::RParen: return "')'";
    case Tok::Comma: return "','";
    case Tok::End: return "end of input";
    case Tok::Bad: return "invalid character";
  }
  return "?";
}

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  Token next() {
    skip_space();
    Token t;
    t.line = line_;
    t.column = col_;
    if (pos_ >= src_.size()) {
      t.kind = Tok::End;
      return t;
    }
    const char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && pos_ + 1 < src_.size() &&
         std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
      const std::size_t start = pos_;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
      if (pos_ < src_.size() && src_[pos_] == '.') {
        advance();
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_])))
          advance();
      }
      if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
        std::size_t look = pos_ + 1;
        if (look < src_.size() && (src_[look] == '+' || src_[look] == '-')) ++look;
        if (look < src_.size() && std::isdigit(static_cast<unsigned char>(src_[look]))) {
          while (pos_ < look) advance();
          while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_])))
            advance();
        }
      }
      t.kind = Tok::Number;
      t.text = std::string(src_.substr(start, pos_ - start));
      t.number = std::strtod(t.text.c_str(), nullptr);
      return t;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
        advance();
      t.kind = Tok::Ident;
      t.text = std::string(src_.substr(start, pos_ - start));
      return t;
    }
    advance();
    t.text = std::string(1, c);
    switch (c) {
      case '+': t.kind = Tok::Plus; break;
      case '-': t.kind = Tok::Minus; break;
      case '*': t.kind = Tok::Star; break;
      case '/': t.kind = Tok::Slash; break;
      case '(': t.kind = Tok::LParen; break;
      case ')': t.kind = Tok::RParen; break;
      case ',': t.kind = Tok::Comma; break;
      default: t.kind = Tok::Bad; break;
    }
    return t;
  }

 private:
  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }
  void skip_space() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) advance();
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t col_ = 1;
};

inline bool function_op(const std::string& name, Op& op) {
  static const std::map<std::string, Op> table = {
      {"sin", Op::Sin}, {"cos", Op::Cos}, {"tan", Op::Tan},   {"exp", Op::Exp},
      {"log", Op::Log}, {"sqrt", Op::Sqrt}, {"pow", Op::Pow},
  };
  const auto it = table.find(name);
  if (it == table.end()) return false;
  op = it->second;
  return true;
}

// expr   := signed (('+'|'-') signed)*
// signed := '-' signed | term
// term   := factor (('*'|'/') factor)*
// factor := '-' factor | primary
// A leading minus therefore negates the whole product that follows it.
class Parser {
 public:
  explicit Parser(std::string_view src) : lex_(src) { tok_ = lex_.next(); }

  std::vector<ExprNode> run() {
    parse_expr();
    if (tok_.kind != Tok::End) fail("expected operator or end of input");
    return std::move(nodes_);
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    std::string msg = what + ", found " + token_name(tok_.kind);
    if (tok_.kind == Tok::Ident || tok_.kind == Tok::Number || tok_.kind == Tok::Bad)
      msg += " '" + tok_.text + "'";
    throw ParseError(msg, tok_.line, tok_.column);
  }

  void expect(Tok kind) {
    if (tok_.kind != kind) fail(std::string("expected ") + token_name(kind));
    tok_ = lex_.next();
  }

  int push(ExprNode n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  int binary(Op op, int lhs, int rhs, const Token& at) {
    ExprNode n;
    n.op = op;
    n.lhs = lhs;
    n.rhs = rhs;
    n.line = at.line;
    n.column = at.column;
    return push(std::move(n));
  }

  int unary(Op op, int arg, const Token& at) { return binary(op, arg, -1, at); }

  int parse_expr() {
    int lhs = parse_signed();
    while (tok_.kind == Tok::Plus || tok_.kind == Tok::Minus) {
      const Token op = tok_;
      tok_ = lex_.next();
      const int rhs = parse_signed();
      lhs = binary(op.kind == Tok::Plus ? Op::Add : Op::Sub, lhs, rhs, op);
    }
    return lhs;
  }

  int parse_signed() {
    if (tok_.kind == Tok::Minus) {
      const Token op = tok_;
      tok_ = lex_.next();
      return unary(Op::Neg, parse_signed(), op);
    }
    return parse_term();
  }

  int parse_term() {
    int lhs = parse_factor();
    while (tok_.kind == Tok::Star || tok_.kind == Tok::Slash) {
      const Token op = tok_;
      tok_ = lex_.next();
      const int rhs = parse_factor();
      lhs = binary(op.kind == Tok::Star ? Op::Mul : Op::Div, lhs, rhs, op);
    }
    return lhs;
  }

  int parse_factor() {
    if (tok_.kind == Tok::Minus) {
      const Token op = tok_;
      tok_ = lex_.next();
      return unary(Op::Neg, parse_factor(), op);
    }
    return parse_primary();
  }

  int parse_primary() {
    const Token t = tok_;
    switch (t.kind) {
      case Tok::Number: {
        tok_ = lex_.next();
        ExprNode n;
        n.op = Op::Number;
        n.number = t.number;
        n.line = t.line;
        n.column = t.column;
        return push(std::move(n));
      }
      case Tok::Ident: {
        tok_ = lex_.next();
        if (tok_.kind != Tok::LParen) {
          ExprNode n;
          n.op = Op::Name;
          n.name = t.text;
          n.line = t.line;
          n.column = t.column;
          return push(std::move(n));
        }
        Op op{};
        if (!function_op(t.text, op))
          throw ParseError("unknown function '" + t.text + "'", t.line, t.column);
        tok_ = lex_.next();  // '('
        const int arg = parse_expr();
        if (op == Op::Pow) {
          expect(Tok::Comma);
          ExprNode n;
          n.op = Op::Pow;
          n.lhs = arg;
          n.exponent = parse_integer_literal();
          n.line = t.line;
          n.column = t.column;
          expect(Tok::RParen);
          return push(std::move(n));
        }
        if (tok_.kind == Tok::Comma) fail("function '" + t.text + "' takes one argument");
        expect(Tok::RParen);
        return unary(op, arg, t);
      }
      case Tok::LParen: {
        tok_ = lex_.next();
        const int inner = parse_expr();
        expect(Tok::RParen);
        return inner;
      }
      default:
        fail("expected number, identifier or '('");
    }
  }

  int parse_integer_literal() {
    bool negative = false;
    if (tok_.kind == Tok::Minus) {
      negative = true;
      tok_ = lex_.next();
    }
    if (tok_.kind != Tok::Number ||
        tok_.text.find_first_not_of("0123456789") != std::string::npos)
      fail("expected integer literal exponent in pow");
    const long value = std::strtol(tok_.text.c_str(), nullptr, 10);
    if (value > 64) fail("pow exponent too large");
    tok_ = lex_.next();
    return negative ? -static_cast<int>(value) : static_cast<int>(value);
  }

  Lexer lex_;
  Token tok_;
  std::vector<ExprNode> nodes_;
};

inline std::string format_number(double x) {
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

inline const char* op_label(Op op) {
  switch (op) {
    case Op::Add: return "Add";
    case Op::Sub: return "Sub";
    case Op::Mul: return "Mul";
    case Op::Div: return "Div";
    case Op::Neg: return "Neg";
    case Op::Pow: return "Pow";
    case Op::Sin: return "Sin";
    case Op::Cos: return "Cos";
    case Op::Tan: return "Tan";
    case Op::Exp: return "Exp";
    case Op::Log: return "Log";
    case Op::Sqrt: return "Sqrt";
    default: return "?";
  }
}

inline std::string node_string(const std::vector<ExprNode>& nodes, int i) {
  const ExprNode& n = nodes[static_cast<std::size_t>(i)];
  switch (n.op) {
    case Op::Number: return format_number(n.number);
    case Op::Name: return "Name " + n.name;
    case Op::Var: return "Var " + n.name;
    case Op::Param: return "Param " + n.name;
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div:
      return std::string(op_label(n.op)) + "(" + node_string(nodes, n.lhs) + ", " +
             node_string(nodes, n.rhs) + ")";
    case Op::Pow:
      return "Pow(" + node_string(nodes, n.lhs) + ", " + std::to_string(n.exponent) + ")";
    default:
      return std::string(op_label(n.op)) + "(" + node_string(nodes, n.lhs) + ")";
  }
}

inline std::string where(const ExprNode& n) {
  return " at " + std::to_string(n.line) + ":" + std::to_string(n.column);
}

}  // namespace detail

/// Parses source text into an unbound expression tree.
inline Expr parse(std::string_view source) {
  detail::Parser p(source);
  return Expr(p.run(), std::string(source));
}

/// Resolves every identifier against decl (variables first, then params).
inline Expr bind(const Expr& e, const Declarations& decl) {
  std::vector<ExprNode> nodes = e.nodes();
  for (auto& n : nodes) {
    if (n.op != Op::Name && n.op != Op::Var && n.op != Op::Param) continue;
    int slot = -1;
    for (std::size_t i = 0; i < decl.variables.size(); ++i)
      if (decl.variables[i] == n.name) {
        slot = static_cast<int>(i);
        n.op = Op::Var;
        break;
      }
    if (slot < 0)
      for (std::size_t i = 0; i < decl.params.size(); ++i)
        if (decl.params[i] == n.name) {
          slot = static_cast<int>(i);
          n.op = Op::Param;
          break;
        }
    if (slot < 0) throw UnboundNameError(n.name);
    n.slot = slot;
  }
  return Expr(std::move(nodes), e.source());
}

inline Expr parse_and_bind(std::string_view source, const Declarations& decl) {
  return bind(parse(source), decl);
}

/// S-expression style rendering, e.g. "Add(Mul(Var q1, Var u2), Var u3)".
inline std::string to_string(const Expr& e) {
  if (e.empty()) return "";
  return detail::node_string(e.nodes(), static_cast<int>(e.nodes().size()) - 1);
}

template <class T>
T Expr::eval(std::span<const T> vars, std::span<const double> params) const {
  using std::cos;
  using std::exp;
  using std::log;
  using std::sin;
  using std::sqrt;
  using std::tan;
  const auto& nodes = *nodes_;
  std::vector<T> val(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const ExprNode& n = nodes[i];
    const auto arg = [&](int k) -> const T& { return val[static_cast<std::size_t>(k)]; };
    T r{};
    switch (n.op) {
      case Op::Number: r = T(n.number); break;
      case Op::Name: throw UnboundNameError(n.name);
      case Op::Var:
        if (static_cast<std::size_t>(n.slot) >= vars.size()) throw UnboundNameError(n.name);
        r = vars[static_cast<std::size_t>(n.slot)];
        break;
      case Op::Param:
        if (static_cast<std::size_t>(n.slot) >= params.size()) throw UnboundNameError(n.name);
        r = T(params[static_cast<std::size_t>(n.slot)]);
        break;
      case Op::Add: r = arg(n.lhs) + arg(n.rhs); break;
      case Op::Sub: r = arg(n.lhs) - arg(n.rhs); break;
      case Op::Mul: r = arg(n.lhs) * arg(n.rhs); break;
      case Op::Div:
        if (primal(arg(n.rhs)) == 0.0) throw DomainError("division by zero" + detail::where(n));
        r = arg(n.lhs) / arg(n.rhs);
        break;
      case Op::Neg: r = -arg(n.lhs); break;
      case Op::Pow:
        if (n.exponent < 0 && primal(arg(n.lhs)) == 0.0)
          throw DomainError("negative power of zero" + detail::where(n));
        r = intpow(arg(n.lhs), n.exponent);
        break;
      case Op::Sin: r = sin(arg(n.lhs)); break;
      case Op::Cos: r = cos(arg(n.lhs)); break;
      case Op::Tan: r = tan(arg(n.lhs)); break;
      case Op::Exp: r = exp(arg(n.lhs)); break;
      case Op::Log:
        if (!(primal(arg(n.lhs)) > 0.0))
          throw DomainError("log of non-positive argument" + detail::where(n));
        r = log(arg(n.lhs));
        break;
      case Op::Sqrt: {
        const double x = primal(arg(n.lhs));
        if (x < 0.0 || (is_jet<T>::value && x == 0.0))
          throw DomainError("sqrt outside its smooth domain" + detail::where(n));
        r = sqrt(arg(n.lhs));
        break;
      }
    }
    if (!std::isfinite(primal(r))) throw DomainError("non-finite result" + detail::where(n));
    val[i] = std::move(r);
  }
  return val.back();
}

using Assignment = std::map<std::string, double>;

/// Exact 2-jet of e at point along the tangent directions dir1 and dir2
/// (names missing from a direction have zero component; parameters are
/// constants).
inline J1 eval_jet2(const Expr& e, const Assignment& point, const Assignment& params,
                    const Assignment& dir1, const Assignment& dir2) {
  Declarations decl;
  std::vector<J1> vars;
  for (const auto& [name, value] : point) {
    decl.variables.push_back(name);
    const auto a = dir1.find(name);
    const auto b = dir2.find(name);
    vars.emplace_back(value, a == dir1.end() ? 0.0 : a->second,
                      b == dir2.end() ? 0.0 : b->second, 0.0);
  }
  std::vector<double> pvals;
  for (const auto& [name, value] : params) {
    decl.params.push_back(name);
    pvals.push_back(value);
  }
  for (const auto* dir : {&dir1, &dir2})
    for (const auto& entry : *dir)
      if (!point.count(entry.first)) throw UnboundNameError(entry.first);
  const Expr bound = bind(e, decl);
  return bound.eval<J1>(vars, pvals);
}

inline double eval_value(const Expr& e, const Assignment& point, const Assignment& params) {
  return eval_jet2(e, point, params, {}, {}).value;
}

}  // namespace anholo
