#pragma once

// System definitions  x' = f(x, u),  y = h(x)  with outputs in the input space.
//
// Two flavours share one interface: expression models (f and h are parsed
// trees) and linear models (f = Ax + Bu, h = -Cx).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "monofb/error.hpp"
#include "monofb/expr.hpp"
#include "monofb/matrix.hpp"
#include "monofb/order.hpp"

namespace monofb {

struct LinearTriple {
  Matrix A;  // n x n
  Matrix B;  // n x m
  Matrix C;  // m x n
};

struct Param {
  std::string name;
  double value = 0.0;
};

class ModelDef {
 public:
  ModelDef() = default;

  /// Expression model. `rhs` has one tree per state, `outputs` one per input.
  static ModelDef expression(std::string name, std::vector<std::string> states,
                             std::vector<std::string> inputs, std::vector<Param> params,
                             std::vector<Expr> rhs, std::vector<Expr> outputs,
                             std::optional<OrthantOrder> order_states = std::nullopt,
                             std::optional<OrthantOrder> order_inputs = std::nullopt) {
    ModelDef m;
    m.name_ = std::move(name);
    m.states_ = std::move(states);
    m.inputs_ = std::move(inputs);
    m.params_ = std::move(params);
    m.rhs_ = std::move(rhs);
    m.outputs_ = std::move(outputs);
    m.order_states_ = order_states.value_or(OrthantOrder::positive(m.states_.size()));
    m.order_inputs_ = order_inputs.value_or(OrthantOrder::positive(m.inputs_.size()));
    m.validate();
    return m;
  }

  /// Linear model x' = Ax + Bu, y = -Cx. Empty name lists get x1.., u1...
  static ModelDef linear(std::string name, LinearTriple abc, std::vector<std::string> states = {},
                         std::vector<std::string> inputs = {},
                         std::optional<OrthantOrder> order_states = std::nullopt,
                         std::optional<OrthantOrder> order_inputs = std::nullopt) {
    const std::size_t n = abc.A.rows();
    const std::size_t m = abc.B.cols();
    if (!abc.A.square() || abc.B.rows() != n || (m > 0 && (abc.C.rows() != m || abc.C.cols() != n)) ||
        (m == 0 && abc.C.rows() != 0))
      throw Error(ErrorCode::DimensionMismatch,
                  "linear triple shapes: A " + shape(abc.A) + ", B " + shape(abc.B) + ", C " + shape(abc.C));
    if (!abc.A.finite() || !abc.B.finite() || !abc.C.finite())
      throw Error(ErrorCode::Validation, "linear matrices must be finite");
    if (states.empty()) states = default_names("x", n);
    if (inputs.empty()) inputs = default_names("u", m);
    if (states.size() != n || inputs.size() != m)
      throw Error(ErrorCode::DimensionMismatch, "declared names do not match matrix dimensions");
    ModelDef md;
    md.name_ = std::move(name);
    md.states_ = std::move(states);
    md.inputs_ = std::move(inputs);
    md.linear_ = std::move(abc);
    md.order_states_ = order_states.value_or(OrthantOrder::positive(n));
    md.order_inputs_ = order_inputs.value_or(OrthantOrder::positive(m));
    md.validate();
    return md;
  }

  const std::string& name() const noexcept { return name_; }
  std::size_t n() const noexcept { return states_.size(); }
  std::size_t m() const noexcept { return inputs_.size(); }
  const std::vector<std::string>& states() const noexcept { return states_; }
  const std::vector<std::string>& inputs() const noexcept { return inputs_; }
  const std::vector<Param>& params() const noexcept { return params_; }
  bool is_linear() const noexcept { return linear_.has_value(); }
  const LinearTriple& linear_triple() const { return *linear_; }
  const std::vector<Expr>& rhs_exprs() const noexcept { return rhs_; }
  const std::vector<Expr>& output_exprs() const noexcept { return outputs_; }
  const OrthantOrder& order_states() const noexcept { return order_states_; }
  const OrthantOrder& order_inputs() const noexcept { return order_inputs_; }

  std::optional<double> param(std::string_view key) const {
    for (const Param& p : params_)
      if (p.name == key) return p.value;
    return std::nullopt;
  }

  /// dx = f(x, u)
  void rhs(std::span<const double> x, std::span<const double> u, std::span<double> dx) const {
    if (linear_) {
      const Matrix& A = linear_->A;
      const Matrix& B = linear_->B;
      for (std::size_t i = 0; i < n(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n(); ++j) s += A(i, j) * x[j];
        for (std::size_t j = 0; j < m(); ++j) s += B(i, j) * u[j];
        dx[i] = s;
      }
      return;
    }
    const Vec slots = make_slots(x, u);
    for (std::size_t i = 0; i < n(); ++i) dx[i] = eval_bound(rhs_[i], slots);
  }

  Vec rhs(std::span<const double> x, std::span<const double> u) const {
    Vec dx(n());
    rhs(x, u, dx);
    return dx;
  }

  /// y = h(x)
  void output(std::span<const double> x, std::span<double> y) const {
    if (linear_) {
      const Matrix& C = linear_->C;
      for (std::size_t i = 0; i < m(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n(); ++j) s += C(i, j) * x[j];
        y[i] = -s;
      }
      return;
    }
    const Vec slots = make_slots(x, {});
    for (std::size_t i = 0; i < m(); ++i) y[i] = eval_bound(outputs_[i], slots);
  }

  Vec output(std::span<const double> x) const {
    Vec y(m());
    output(x, y);
    return y;
  }

  /// Names visible to expressions, in slot order: states, inputs, params.
  std::vector<std::string> slot_names() const {
    std::vector<std::string> names = states_;
    names.insert(names.end(), inputs_.begin(), inputs_.end());
    for (const Param& p : params_) names.push_back(p.name);
    return names;
  }

 private:
  static std::string shape(const Matrix& M) {
    return std::to_string(M.rows()) + "x" + std::to_string(M.cols());
  }

  static std::vector<std::string> default_names(const std::string& prefix, std::size_t k) {
    std::vector<std::string> v;
    for (std::size_t i = 1; i <= k; ++i) v.push_back(prefix + std::to_string(i));
    return v;
  }

  Vec make_slots(std::span<const double> x, std::span<const double> u) const {
    Vec s(n() + m() + params_.size(), 0.0);
    std::copy(x.begin(), x.end(), s.begin());
    std::copy(u.begin(), u.end(), s.begin() + static_cast<std::ptrdiff_t>(n()));
    for (std::size_t i = 0; i < params_.size(); ++i) s[n() + m() + i] = params_[i].value;
    return s;
  }

  void validate() {
    std::set<std::string> seen;
    for (const auto& nm : slot_names())
      if (!seen.insert(nm).second) throw Error(ErrorCode::Validation, "duplicate name " + nm);
    for (const Param& p : params_)
      if (!std::isfinite(p.value)) throw Error(ErrorCode::Validation, "parameter " + p.name + " is not finite");
    if (order_states_.dim() != n() || order_inputs_.dim() != m())
      throw Error(ErrorCode::DimensionMismatch, "order dimension does not match state/input dimension");
    if (linear_) return;
    if (rhs_.size() != n())
      throw Error(ErrorCode::DimensionMismatch, "expected " + std::to_string(n()) + " right-hand sides");
    if (outputs_.size() != m())
      throw Error(ErrorCode::DimensionMismatch, "expected " + std::to_string(m()) + " outputs");
    const auto names = slot_names();
    for (Expr& e : rhs_) bind_slots(e, names);
    // h depends on states and params only
    std::vector<std::string> out_names = states_;
    for (const auto& nm : inputs_) out_names.push_back("\x01" + nm);  // unreachable placeholder
    for (const Param& p : params_) out_names.push_back(p.name);
    for (Expr& e : outputs_) bind_slots(e, out_names);
  }

  std::string name_;
  std::vector<std::string> states_;
  std::vector<std::string> inputs_;
  std::vector<Param> params_;
  std::optional<LinearTriple> linear_;
  std::vector<Expr> rhs_;
  std::vector<Expr> outputs_;
  OrthantOrder order_states_;
  OrthantOrder order_inputs_;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

inline double parse_real(const std::string& s, std::size_t line) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw Error(ErrorCode::Syntax, "line " + std::to_string(line) + ": bad number '" + s + "'", std::nullopt, line);
  return v;
}

/// "[[1, 2], [3, 4]]" -> 2x2. "[[], []]" gives a 2x0 matrix, "[]" a 0x0 one.
inline Matrix parse_matrix_literal(const std::string& text, std::size_t line) {
  std::string s;
  for (char c : text)
    if (c != ' ' && c != '\t') s += c;
  const auto fail = [&](const std::string& why) -> Error {
    return Error(ErrorCode::Syntax, "line " + std::to_string(line) + ": matrix literal " + why, std::nullopt, line);
  };
  if (s.size() < 2 || s.front() != '[' || s.back() != ']') throw fail("must be [[...],...]");
  std::vector<Vec> rows;
  std::size_t i = 1;
  const std::size_t end = s.size() - 1;
  while (i < end) {
    if (s[i] != '[') throw fail("expected '['");
    const std::size_t close = s.find(']', i);
    if (close == std::string::npos || close > end) throw fail("unterminated row");
    Vec row;
    std::string body = s.substr(i + 1, close - i - 1);
    std::size_t p = 0;
    while (!body.empty() && p <= body.size()) {
      const std::size_t comma = body.find(',', p);
      const std::string tok = body.substr(p, comma == std::string::npos ? std::string::npos : comma - p);
      row.push_back(parse_real(tok, line));
      if (comma == std::string::npos) break;
      p = comma + 1;
    }
    rows.push_back(std::move(row));
    i = close + 1;
    if (i < end) {
      if (s[i] != ',') throw fail("expected ',' between rows");
      ++i;
    }
  }
  for (const Vec& r : rows)
    if (r.size() != rows.front().size())
      throw Error(ErrorCode::DimensionMismatch, "line " + std::to_string(line) + ": ragged matrix rows",
                  std::nullopt, line);
  return Matrix::from_rows(rows);
}

inline std::string matrix_literal(const Matrix& M) {
  std::string s = "[";
  for (std::size_t i = 0; i < M.rows(); ++i) {
    if (i) s += ", ";
    s += '[';
    for (std::size_t j = 0; j < M.cols(); ++j) {
      if (j) s += ", ";
      s += format_number(M(i, j));
    }
    s += ']';
  }
  return s + "]";
}

inline OrthantOrder parse_order(const std::vector<std::string>& words, std::size_t line) {
  std::vector<int> signs;
  for (std::size_t i = 1; i < words.size(); ++i) {
    if (words[i] == "+") signs.push_back(1);
    else if (words[i] == "-") signs.push_back(-1);
    else
      throw Error(ErrorCode::Syntax, "line " + std::to_string(line) + ": order entries must be + or -",
                  std::nullopt, line);
  }
  return OrthantOrder(std::move(signs));
}

}  // namespace detail

/// Parses the line-oriented model format. Grammar errors carry ErrorCode in
/// the Parse category, consistency errors in the Validation category; both
/// carry the offending line number where one exists.
inline ModelDef load_model(std::string_view document) {
  struct Located {
    std::string text;
    std::size_t line;
  };
  std::string name = "model";
  std::optional<std::vector<std::string>> states, inputs;
  std::vector<Param> params;
  std::optional<OrthantOrder> ord_s, ord_i;
  std::size_t ord_s_line = 0, ord_i_line = 0;
  std::map<std::string, Located> dyn, out;
  std::map<char, Located> lin;

  std::istringstream is{std::string(document)};
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string line = detail::trim(raw);
    if (line.empty()) continue;
    const auto words = detail::split_ws(line);
    const std::string& kw = words[0];
    const auto syntax = [&](const std::string& why) {
      return Error(ErrorCode::Syntax, "line " + std::to_string(lineno) + ": " + why, std::nullopt, lineno);
    };
    if (kw == "model") {
      if (words.size() != 2) throw syntax("expected 'model NAME'");
      name = words[1];
    } else if (kw == "states") {
      states = std::vector<std::string>(words.begin() + 1, words.end());
    } else if (kw == "inputs") {
      inputs = std::vector<std::string>(words.begin() + 1, words.end());
    } else if (kw == "param") {
      if (words.size() != 3) throw syntax("expected 'param NAME VALUE'");
      const double v = detail::parse_real(words[2], lineno);
      if (!std::isfinite(v))
        throw Error(ErrorCode::Validation, "line " + std::to_string(lineno) + ": parameter must be finite",
                    std::nullopt, lineno);
      params.push_back({words[1], v});
    } else if (kw == "order_states") {
      ord_s = detail::parse_order(words, lineno);
      ord_s_line = lineno;
    } else if (kw == "order_inputs") {
      ord_i = detail::parse_order(words, lineno);
      ord_i_line = lineno;
    } else if (kw == "linear") {
      const auto eq = line.find('=');
      if (words.size() < 3 || eq == std::string::npos) throw syntax("expected 'linear A = [[...]]'");
      const std::string which = detail::trim(line.substr(6, eq - 6));
      if (which != "A" && which != "B" && which != "C") throw syntax("linear block must be A, B or C");
      lin[which[0]] = {line.substr(eq + 1), lineno};
    } else if (const auto eq = line.find('='); eq != std::string::npos) {
      const std::string lhs = detail::trim(line.substr(0, eq));
      const std::string rhs = line.substr(eq + 1);
      if (lhs.size() > 1 && lhs[0] == 'd') {
        if (!dyn.emplace(lhs.substr(1), Located{rhs, lineno}).second) throw syntax("duplicate equation " + lhs);
      } else if (lhs.size() > 1 && lhs[0] == 'y') {
        if (!out.emplace(lhs.substr(1), Located{rhs, lineno}).second) throw syntax("duplicate output " + lhs);
      } else {
        throw syntax("left-hand side must be dNAME or yINDEX, got '" + lhs + "'");
      }
    } else {
      throw syntax("unknown directive '" + kw + "'");
    }
  }

  const auto validation = [](ErrorCode code, const std::string& why, std::size_t line) {
    return Error(code, (line ? "line " + std::to_string(line) + ": " : std::string()) + why, std::nullopt,
                 line ? std::optional<std::size_t>(line) : std::nullopt);
  };
  const auto check_order = [&](const std::optional<OrthantOrder>& o, std::size_t dim, std::size_t line) {
    if (o && o->dim() != dim)
      throw validation(ErrorCode::DimensionMismatch, "order has " + std::to_string(o->dim()) +
                                                         " entries, expected " + std::to_string(dim), line);
  };

  if (!lin.empty()) {
    if (!dyn.empty() || !out.empty())
      throw validation(ErrorCode::Validation, "linear blocks and expression equations are mutually exclusive",
                       (dyn.empty() ? out : dyn).begin()->second.line);
    for (char k : {'A', 'B', 'C'})
      if (!lin.count(k)) throw validation(ErrorCode::Validation, std::string("missing linear ") + k, 0);
    LinearTriple abc{detail::parse_matrix_literal(lin['A'].text, lin['A'].line),
                     detail::parse_matrix_literal(lin['B'].text, lin['B'].line),
                     detail::parse_matrix_literal(lin['C'].text, lin['C'].line)};
    if (!params.empty()) throw validation(ErrorCode::Validation, "linear models take no parameters", 0);
    const std::size_t n = abc.A.rows();
    if (abc.B.rows() == 0 && abc.B.cols() == 0 && n > 0) abc.B = Matrix(n, 0);
    if (abc.C.rows() == 0 && abc.C.cols() == 0) abc.C = Matrix(0, n);
    check_order(ord_s, n, ord_s_line);
    check_order(ord_i, abc.B.cols(), ord_i_line);
    try {
      return ModelDef::linear(name, std::move(abc), states.value_or(std::vector<std::string>{}),
                              inputs.value_or(std::vector<std::string>{}), ord_s, ord_i);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::DimensionMismatch) throw validation(e.code(), e.what(), lin['C'].line);
      throw;
    }
  }

  const std::vector<std::string> st = states.value_or(std::vector<std::string>{});
  const std::vector<std::string> in = inputs.value_or(std::vector<std::string>{});
  if (st.empty()) throw validation(ErrorCode::Validation, "no states declared", 0);
  check_order(ord_s, st.size(), ord_s_line);
  check_order(ord_i, in.size(), ord_i_line);

  const auto parse_at = [](const Located& loc) {
    try {
      return parse_expression(loc.text);
    } catch (const Error& e) {
      throw Error(e.code(), "line " + std::to_string(loc.line) + ": " + e.what(), e.offset(), loc.line);
    }
  };

  std::vector<Expr> rhs;
  std::vector<std::size_t> rhs_lines;
  for (const auto& s : st) {
    const auto it = dyn.find(s);
    if (it == dyn.end()) throw validation(ErrorCode::Validation, "missing equation d" + s, 0);
    rhs.push_back(parse_at(it->second));
    rhs_lines.push_back(it->second.line);
  }
  for (const auto& [k, loc] : dyn)
    if (std::find(st.begin(), st.end(), k) == st.end())
      throw validation(ErrorCode::Validation, "equation d" + k + " does not name a state", loc.line);

  std::vector<Expr> outs;
  std::vector<std::size_t> out_lines;
  for (std::size_t j = 1; j <= in.size(); ++j) {
    const auto it = out.find(std::to_string(j));
    if (it == out.end()) throw validation(ErrorCode::Validation, "missing output y" + std::to_string(j), 0);
    outs.push_back(parse_at(it->second));
    out_lines.push_back(it->second.line);
  }
  if (out.size() != in.size())
    throw validation(ErrorCode::DimensionMismatch,
                     "expected " + std::to_string(in.size()) + " outputs (one per input)",
                     out.rbegin()->second.line);

  // Resolve names up front so that errors carry the right line.
  std::vector<std::string> names = st;
  names.insert(names.end(), in.begin(), in.end());
  for (const Param& p : params) names.push_back(p.name);
  std::vector<std::string> out_names = st;
  for (const Param& p : params) out_names.push_back(p.name);
  const auto check_names = [&](Expr e, const std::vector<std::string>& allowed, std::size_t line) {
    try {
      bind_slots(e, allowed);
    } catch (const Error& err) {
      throw validation(err.code(), err.what(), line);
    }
  };
  for (std::size_t i = 0; i < rhs.size(); ++i) check_names(rhs[i], names, rhs_lines[i]);
  for (std::size_t i = 0; i < outs.size(); ++i) check_names(outs[i], out_names, out_lines[i]);

  return ModelDef::expression(name, st, in, std::move(params), std::move(rhs), std::move(outs), ord_s, ord_i);
}

/// Serializes back to the model file format; load_model(to_text(m)) is
/// equivalent to m.
inline std::string to_text(const ModelDef& m) {
  std::ostringstream os;
  os << "model " << m.name() << '\n';
  os << "states";
  for (const auto& s : m.states()) os << ' ' << s;
  os << '\n';
  if (m.m() > 0) {
    os << "inputs";
    for (const auto& s : m.inputs()) os << ' ' << s;
    os << '\n';
  }
  for (const Param& p : m.params()) os << "param " << p.name << ' ' << format_number(p.value) << '\n';
  os << "order_states " << m.order_states().to_string() << '\n';
  if (m.m() > 0) os << "order_inputs " << m.order_inputs().to_string() << '\n';
  if (m.is_linear()) {
    const LinearTriple& t = m.linear_triple();
    os << "linear A = " << detail::matrix_literal(t.A) << '\n';
    os << "linear B = " << detail::matrix_literal(t.B) << '\n';
    os << "linear C = " << detail::matrix_literal(t.C) << '\n';
  } else {
    for (std::size_t i = 0; i < m.n(); ++i) os << 'd' << m.states()[i] << " = " << to_string(m.rhs_exprs()[i]) << '\n';
    for (std::size_t j = 0; j < m.m(); ++j) os << 'y' << (j + 1) << " = " << to_string(m.output_exprs()[j]) << '\n';
  }
  return os.str();
}

}  // namespace monofb
