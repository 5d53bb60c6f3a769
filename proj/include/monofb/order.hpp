#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "monofb/error.hpp"
#include "monofb/matrix.hpp"

namespace monofb {

/// Partial order induced by an orthant cone: a <= b iff s_i (b_i - a_i) >= 0
/// for every coordinate i, with each sign s_i in {+1, -1}.
class OrthantOrder {
 public:
  OrthantOrder() = default;
  explicit OrthantOrder(std::vector<int> signs) : signs_(std::move(signs)) {
    for (int s : signs_)
      if (s != 1 && s != -1) throw Error(ErrorCode::Validation, "orthant sign must be +1 or -1");
  }

  static OrthantOrder positive(std::size_t dim) { return OrthantOrder(std::vector<int>(dim, 1)); }

  std::size_t dim() const noexcept { return signs_.size(); }
  int sign(std::size_t i) const { return signs_[i]; }
  const std::vector<int>& signs() const noexcept { return signs_; }

  /// "+ - +" style rendering used by the model file format.
  std::string to_string() const {
    std::string s;
    for (std::size_t i = 0; i < signs_.size(); ++i) {
      if (i) s += ' ';
      s += signs_[i] > 0 ? '+' : '-';
    }
    return s;
  }

  friend bool operator==(const OrthantOrder&, const OrthantOrder&) = default;

 private:
  std::vector<int> signs_;
};

/// a <= b in `order`, with optional slack: s_i (b_i - a_i) >= -slack.
inline bool leq(const OrthantOrder& order, std::span<const double> a, std::span<const double> b,
                double slack = 0.0) {
  if (a.size() != order.dim() || b.size() != order.dim())
    throw Error(ErrorCode::DimensionMismatch, "leq: vector and order dimensions differ");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (order.sign(i) * (b[i] - a[i]) < -slack) return false;
  return true;
}

inline OrthantOrder reversed(const OrthantOrder& o) {
  std::vector<int> s = o.signs();
  for (int& v : s) v = -v;
  return OrthantOrder(std::move(s));
}

inline OrthantOrder product(const OrthantOrder& a, const OrthantOrder& b) {
  std::vector<int> s = a.signs();
  s.insert(s.end(), b.signs().begin(), b.signs().end());
  return OrthantOrder(std::move(s));
}

struct Rectangle {
  Vec lo;
  Vec hi;
};

/// Tightest lo, hi with lo <= p <= hi (in `order`) for every point.
inline Rectangle bounding_rectangle(const OrthantOrder& order, std::span<const Vec> points) {
  if (points.empty()) throw Error(ErrorCode::EmptyInput, "bounding_rectangle: no points");
  const std::size_t d = order.dim();
  Rectangle r{points.front(), points.front()};
  for (const Vec& p : points) {
    if (p.size() != d) throw Error(ErrorCode::DimensionMismatch, "bounding_rectangle: point dimension");
    for (std::size_t i = 0; i < d; ++i) {
      if (order.sign(i) > 0) {
        r.lo[i] = std::min(r.lo[i], p[i]);
        r.hi[i] = std::max(r.hi[i], p[i]);
      } else {
        r.lo[i] = std::max(r.lo[i], p[i]);
        r.hi[i] = std::min(r.hi[i], p[i]);
      }
    }
  }
  return r;
}

}  // namespace monofb
