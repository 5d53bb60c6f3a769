#pragma once

// Arithmetic expressions for model right-hand sides and output maps.
//
// Grammar (highest binding first):
//   primary := number | ident | ident '(' args ')' | '(' expr ')'
//   power   := primary ('^' unary)?          right-associative
//   unary   := '-' unary | power
//   term    := unary (('*' | '/') unary)*
//   expr    := term (('+' | '-') term)*

#include <charconv>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "monofb/error.hpp"

namespace monofb {

enum class TokenKind { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, Comma };

struct Token {
  TokenKind kind;
  std::string text;
  double number = 0.0;
  std::size_t offset = 0;

  friend bool operator==(const Token&, const Token&) = default;
};

inline std::vector<Token> tokenize(std::string_view src) {
  std::vector<Token> out;
  const auto is_digit = [](char c) { return c >= '0' && c <= '9'; };
  const auto is_ident_start = [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
  };
  std::size_t i = 0;
  while (i < src.size()) {
    const char c = src[i];
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      ++i;
      continue;
    }
    const std::size_t start = i;
    if (is_digit(c) || (c == '.' && i + 1 < src.size() && is_digit(src[i + 1]))) {
      while (i < src.size() && is_digit(src[i])) ++i;
      if (i < src.size() && src[i] == '.') {
        ++i;
        while (i < src.size() && is_digit(src[i])) ++i;
      }
      // Only consume an exponent when it is complete.
      if (i < src.size() && (src[i] == 'e' || src[i] == 'E')) {
        std::size_t j = i + 1;
        if (j < src.size() && (src[j] == '+' || src[j] == '-')) ++j;
        if (j < src.size() && is_digit(src[j])) {
          while (j < src.size() && is_digit(src[j])) ++j;
          i = j;
        }
      }
      Token t{TokenKind::Number, std::string(src.substr(start, i - start)), 0.0, start};
      // from_chars rejects a leading '.', strtod does not.
      t.number = std::strtod(t.text.c_str(), nullptr);
      out.push_back(std::move(t));
      continue;
    }
    if (is_ident_start(c)) {
      while (i < src.size() && (is_ident_start(src[i]) || is_digit(src[i]))) ++i;
      out.push_back({TokenKind::Ident, std::string(src.substr(start, i - start)), 0.0, start});
      continue;
    }
    TokenKind kind;
    switch (c) {
      case '+': kind = TokenKind::Plus; break;
      case '-': kind = TokenKind::Minus; break;
      case '*': kind = TokenKind::Star; break;
      case '/': kind = TokenKind::Slash; break;
      case '^': kind = TokenKind::Caret; break;
      case '(': kind = TokenKind::LParen; break;
      case ')': kind = TokenKind::RParen; break;
      case ',': kind = TokenKind::Comma; break;
      default:
        throw Error(ErrorCode::IllegalCharacter,
                    "illegal character '" + std::string(1, c) + "' at offset " + std::to_string(i), i);
    }
    out.push_back({kind, std::string(1, c), 0.0, start});
    ++i;
  }
  return out;
}

enum class ExprKind { Constant, Variable, Neg, Add, Sub, Mul, Div, Pow, Call };
enum class Func { Exp, Ln, Sqrt, Abs, Min, Max };

inline const char* func_name(Func f) {
  switch (f) {
    case Func::Exp: return "exp";
    case Func::Ln: return "ln";
    case Func::Sqrt: return "sqrt";
    case Func::Abs: return "abs";
    case Func::Min: return "min";
    case Func::Max: return "max";
  }
  return "?";
}

inline std::size_t func_arity(Func f) { return (f == Func::Min || f == Func::Max) ? 2 : 1; }

inline std::optional<Func> lookup_func(std::string_view name) {
  static const std::unordered_map<std::string_view, Func> table{
      {"exp", Func::Exp}, {"ln", Func::Ln},   {"sqrt", Func::Sqrt},
      {"abs", Func::Abs}, {"min", Func::Min}, {"max", Func::Max}};
  if (auto it = table.find(name); it != table.end()) return it->second;
  return std::nullopt;
}

/// Expression tree node. Variables may be bound to a slot index so that
/// evaluation against a flat value array needs no name lookups.
struct Expr {
  ExprKind kind = ExprKind::Constant;
  double value = 0.0;
  std::string name;
  Func func = Func::Exp;
  std::vector<Expr> children;
  std::size_t offset = 0;
  int slot = -1;

  static Expr constant(double v, std::size_t off = 0) {
    Expr e;
    e.value = v;
    e.offset = off;
    return e;
  }
  static Expr variable(std::string n, std::size_t off = 0) {
    Expr e;
    e.kind = ExprKind::Variable;
    e.name = std::move(n);
    e.offset = off;
    return e;
  }
  static Expr unary(ExprKind k, Expr c, std::size_t off = 0) {
    Expr e;
    e.kind = k;
    e.offset = off;
    e.children.push_back(std::move(c));
    return e;
  }
  static Expr binary(ExprKind k, Expr a, Expr b, std::size_t off = 0) {
    Expr e;
    e.kind = k;
    e.offset = off;
    e.children.push_back(std::move(a));
    e.children.push_back(std::move(b));
    return e;
  }
  static Expr call(Func f, std::vector<Expr> args, std::size_t off = 0) {
    Expr e;
    e.kind = ExprKind::Call;
    e.func = f;
    e.offset = off;
    e.children = std::move(args);
    return e;
  }
};

/// Structural equality, ignoring source offsets and slot bindings.
inline bool same_structure(const Expr& a, const Expr& b) {
  if (a.kind != b.kind || a.children.size() != b.children.size()) return false;
  switch (a.kind) {
    case ExprKind::Constant:
      if (a.value != b.value) return false;
      break;
    case ExprKind::Variable:
      if (a.name != b.name) return false;
      break;
    case ExprKind::Call:
      if (a.func != b.func) return false;
      break;
    default:
      break;
  }
  for (std::size_t i = 0; i < a.children.size(); ++i)
    if (!same_structure(a.children[i], b.children[i])) return false;
  return true;
}

namespace detail {

class Parser {
 public:
  explicit Parser(std::span<const Token> toks) : toks_(toks) {}

  Expr parse() {
    if (toks_.empty()) throw Error(ErrorCode::UnexpectedToken, "empty expression", 0);
    Expr e = expr();
    if (pos_ < toks_.size()) {
      const Token& t = toks_[pos_];
      if (t.kind == TokenKind::RParen)
        throw Error(ErrorCode::UnbalancedParen, "unmatched ')' at offset " + std::to_string(t.offset), t.offset);
      unexpected(t);
    }
    return e;
  }

 private:
  const Token* peek() const { return pos_ < toks_.size() ? &toks_[pos_] : nullptr; }
  bool at(TokenKind k) const { return pos_ < toks_.size() && toks_[pos_].kind == k; }
  std::size_t end_offset() const {
    return toks_.empty() ? 0 : toks_.back().offset + toks_.back().text.size();
  }

  [[noreturn]] void unexpected(const Token& t) const {
    throw Error(ErrorCode::UnexpectedToken,
                "unexpected '" + t.text + "' at offset " + std::to_string(t.offset), t.offset);
  }
  [[noreturn]] void unexpected_end() const {
    throw Error(ErrorCode::UnexpectedToken, "unexpected end of expression", end_offset());
  }

  Expr expr() {
    Expr lhs = term();
    while (at(TokenKind::Plus) || at(TokenKind::Minus)) {
      const Token& op = toks_[pos_++];
      Expr rhs = term();
      lhs = Expr::binary(op.kind == TokenKind::Plus ? ExprKind::Add : ExprKind::Sub,
                         std::move(lhs), std::move(rhs), op.offset);
    }
    return lhs;
  }

  Expr term() {
    Expr lhs = unary();
    while (at(TokenKind::Star) || at(TokenKind::Slash)) {
      const Token& op = toks_[pos_++];
      Expr rhs = unary();
      lhs = Expr::binary(op.kind == TokenKind::Star ? ExprKind::Mul : ExprKind::Div,
                         std::move(lhs), std::move(rhs), op.offset);
    }
    return lhs;
  }

  Expr unary() {
    if (at(TokenKind::Minus)) {
      const std::size_t off = toks_[pos_++].offset;
      return Expr::unary(ExprKind::Neg, unary(), off);
    }
    return power();
  }

  Expr power() {
    Expr base = primary();
    if (at(TokenKind::Caret)) {
      const std::size_t off = toks_[pos_++].offset;
      return Expr::binary(ExprKind::Pow, std::move(base), unary(), off);
    }
    return base;
  }

  Expr primary() {
    const Token* t = peek();
    if (!t) unexpected_end();
    switch (t->kind) {
      case TokenKind::Number:
        ++pos_;
        return Expr::constant(t->number, t->offset);
      case TokenKind::Ident: {
        ++pos_;
        if (!at(TokenKind::LParen)) return Expr::variable(t->text, t->offset);
        const auto f = lookup_func(t->text);
        if (!f) throw Error(ErrorCode::UnknownFunction, "unknown function " + t->text, t->offset);
        const std::size_t open = toks_[pos_++].offset;
        std::vector<Expr> args;
        if (!at(TokenKind::RParen)) {
          args.push_back(expr());
          while (at(TokenKind::Comma)) {
            ++pos_;
            args.push_back(expr());
          }
        }
        expect_close(open);
        if (args.size() != func_arity(*f))
          throw Error(ErrorCode::WrongArity,
                      t->text + " takes " + std::to_string(func_arity(*f)) + " argument(s), got " +
                          std::to_string(args.size()),
                      t->offset);
        return Expr::call(*f, std::move(args), t->offset);
      }
      case TokenKind::LParen: {
        const std::size_t open = t->offset;
        ++pos_;
        Expr inner = expr();
        expect_close(open);
        return inner;
      }
      default:
        unexpected(*t);
    }
  }

  void expect_close(std::size_t open_offset) {
    if (at(TokenKind::RParen)) {
      ++pos_;
      return;
    }
    if (!peek())
      throw Error(ErrorCode::UnbalancedParen,
                  "'(' at offset " + std::to_string(open_offset) + " is never closed", open_offset);
    unexpected(*peek());
  }

  std::span<const Token> toks_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Expr parse_expression(std::span<const Token> tokens) { return detail::Parser(tokens).parse(); }

inline Expr parse_expression(std::string_view src) {
  const auto toks = tokenize(src);
  return parse_expression(toks);
}

namespace detail {

[[noreturn]] inline void domain_error(const Expr& e, const std::string& why) {
  throw Error(ErrorCode::EvalDomainError, why + " at offset " + std::to_string(e.offset), e.offset);
}

inline double checked(const Expr& e, double v) {
  if (!std::isfinite(v)) domain_error(e, "non-finite result");
  return v;
}

template <class Lookup>
double evaluate_with(const Expr& e, const Lookup& lookup) {
  switch (e.kind) {
    case ExprKind::Constant:
      return e.value;
    case ExprKind::Variable:
      return lookup(e);
    case ExprKind::Neg:
      return -evaluate_with(e.children[0], lookup);
    case ExprKind::Add:
      return checked(e, evaluate_with(e.children[0], lookup) + evaluate_with(e.children[1], lookup));
    case ExprKind::Sub:
      return checked(e, evaluate_with(e.children[0], lookup) - evaluate_with(e.children[1], lookup));
    case ExprKind::Mul:
      return checked(e, evaluate_with(e.children[0], lookup) * evaluate_with(e.children[1], lookup));
    case ExprKind::Div: {
      const double num = evaluate_with(e.children[0], lookup);
      const double den = evaluate_with(e.children[1], lookup);
      if (den == 0.0) domain_error(e, "division by zero");
      return checked(e, num / den);
    }
    case ExprKind::Pow: {
      const double base = evaluate_with(e.children[0], lookup);
      const double ex = evaluate_with(e.children[1], lookup);
      if (base == 0.0 && ex < 0.0) domain_error(e, "zero raised to a negative power");
      if (base < 0.0 && ex != std::trunc(ex)) domain_error(e, "negative base with fractional exponent");
      return checked(e, std::pow(base, ex));
    }
    case ExprKind::Call: {
      const double a = evaluate_with(e.children[0], lookup);
      switch (e.func) {
        case Func::Exp: return checked(e, std::exp(a));
        case Func::Ln:
          if (a <= 0.0) domain_error(e, "ln of non-positive value");
          return std::log(a);
        case Func::Sqrt:
          if (a < 0.0) domain_error(e, "sqrt of negative value");
          return std::sqrt(a);
        case Func::Abs: return std::abs(a);
        case Func::Min: return std::min(a, evaluate_with(e.children[1], lookup));
        case Func::Max: return std::max(a, evaluate_with(e.children[1], lookup));
      }
    }
  }
  domain_error(e, "corrupt expression node");
}

}  // namespace detail

using Environment = std::map<std::string, double, std::less<>>;

/// Evaluates by name lookup. Throws UnboundVariable for a free name.
inline double eval_ast(const Expr& ast, const Environment& env) {
  return detail::evaluate_with(ast, [&](const Expr& v) {
    const auto it = env.find(v.name);
    if (it == env.end()) throw Error(ErrorCode::UnboundVariable, "unbound variable " + v.name, v.offset);
    return it->second;
  });
}

/// Evaluates a tree whose variables were bound with `bind_slots`.
inline double eval_bound(const Expr& ast, std::span<const double> slots) {
  return detail::evaluate_with(ast, [&](const Expr& v) {
    if (v.slot < 0) throw Error(ErrorCode::UnboundVariable, "unbound variable " + v.name, v.offset);
    return slots[static_cast<std::size_t>(v.slot)];
  });
}

/// Assigns each variable the index of its name in `names`. Throws
/// UnboundVariable for a name not present.
inline void bind_slots(Expr& ast, const std::vector<std::string>& names) {
  if (ast.kind == ExprKind::Variable) {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == ast.name) {
        ast.slot = static_cast<int>(i);
        return;
      }
    throw Error(ErrorCode::UnboundVariable, "unresolved name " + ast.name, ast.offset);
  }
  for (Expr& c : ast.children) bind_slots(c, names);
}

/// Replaces every variable named in `subst` with a copy of its tree.
inline Expr substitute(const Expr& ast, const std::map<std::string, Expr, std::less<>>& subst) {
  if (ast.kind == ExprKind::Variable) {
    if (auto it = subst.find(ast.name); it != subst.end()) return it->second;
    return ast;
  }
  Expr out = ast;
  for (Expr& c : out.children) c = substitute(c, subst);
  return out;
}

inline void collect_variables(const Expr& ast, std::vector<std::string>& out) {
  if (ast.kind == ExprKind::Variable) {
    out.push_back(ast.name);
    return;
  }
  for (const Expr& c : ast.children) collect_variables(c, out);
}

inline std::string format_number(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

namespace detail {

inline int precedence(const Expr& e) {
  switch (e.kind) {
    case ExprKind::Add:
    case ExprKind::Sub: return 1;
    case ExprKind::Mul:
    case ExprKind::Div: return 2;
    case ExprKind::Neg: return 3;
    case ExprKind::Pow: return 4;
    default: return 5;
  }
}

inline void print(const Expr& e, std::ostringstream& os);

inline void print_operand(const Expr& e, int min_prec, std::ostringstream& os) {
  const bool paren = precedence(e) < min_prec;
  if (paren) os << '(';
  print(e, os);
  if (paren) os << ')';
}

inline void print(const Expr& e, std::ostringstream& os) {
  switch (e.kind) {
    case ExprKind::Constant:
      os << format_number(e.value);
      return;
    case ExprKind::Variable:
      os << e.name;
      return;
    case ExprKind::Neg:
      os << '-';
      print_operand(e.children[0], 3, os);
      return;
    case ExprKind::Call:
      os << func_name(e.func) << '(';
      for (std::size_t i = 0; i < e.children.size(); ++i) {
        if (i) os << ", ";
        print(e.children[i], os);
      }
      os << ')';
      return;
    case ExprKind::Pow:
      // base binds tighter than '^'; exponent may be a unary chain
      print_operand(e.children[0], 5, os);
      os << '^';
      print_operand(e.children[1], 3, os);
      return;
    default: {
      const int p = precedence(e);
      const char op = e.kind == ExprKind::Add ? '+' : e.kind == ExprKind::Sub ? '-' : e.kind == ExprKind::Mul ? '*' : '/';
      print_operand(e.children[0], p, os);
      os << ' ' << op << ' ';
      // left-associative: right operand of equal precedence needs parens
      print_operand(e.children[1], p + 1, os);
      return;
    }
  }
}

}  // namespace detail

/// Renders an expression that parses back to the same tree.
inline std::string to_string(const Expr& e) {
  std::ostringstream os;
  detail::print(e, os);
  return os.str();
}

}  // namespace monofb
