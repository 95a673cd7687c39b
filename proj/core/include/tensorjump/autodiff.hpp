#pragma once

// Minimal reverse-mode automatic differentiation over scalars.
//
// A Var is a value plus an index into the thread's active Tape. Constants
// carry id == kConstant and never reach the tape. Fused n-ary kernels (sum,
// dot) record one node with n edges instead of n binary nodes, which keeps
// tapes for the network small.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace tensorjump::ad {

inline constexpr std::uint32_t kConstant = 0xFFFFFFFFu;

struct Var {
  double value = 0.0;
  std::uint32_t id = kConstant;

  Var() = default;
  Var(double v) : value(v) {}  // NOLINT: implicit constants are intended
  Var(double v, std::uint32_t i) : value(v), id(i) {}
  bool is_constant() const { return id == kConstant; }
};

class Tape {
 public:
  struct Edge {
    std::uint32_t parent;
    double partial;
  };

  Tape() { node_end_.reserve(1 << 16); edges_.reserve(1 << 18); }

  void clear() {
    edges_.clear();
    node_end_.clear();
  }
  std::size_t nodes() const { return node_end_.size(); }
  std::size_t edges() const { return edges_.size(); }

  /// A fresh independent variable (leaf).
  Var variable(double value) {
    node_end_.push_back(static_cast<std::uint32_t>(edges_.size()));
    return {value, static_cast<std::uint32_t>(node_end_.size() - 1)};
  }

  // Node construction: push_edge() any number of times, then finish(). No
  // other node may be created in between.
  void push_edge(std::uint32_t parent, double partial) {
    if (parent != kConstant) edges_.push_back({parent, partial});
  }
  Var finish(double value) {
    const std::uint32_t begin = node_end_.empty() ? 0u : node_end_.back();
    if (edges_.size() == begin) return Var(value);
    node_end_.push_back(static_cast<std::uint32_t>(edges_.size()));
    return {value, static_cast<std::uint32_t>(node_end_.size() - 1)};
  }

  /// Adjoints d(output)/d(node) for every node on the tape.
  std::vector<double> gradient(const Var& output) const;
  /// Same, accumulating only into the first n_leaves adjoints of out.
  void accumulate_gradient(const Var& output, std::span<double> leaves, double seed = 1.0) const;

  static Tape* active();

 private:
  friend class TapeScope;
  std::vector<Edge> edges_;
  std::vector<std::uint32_t> node_end_;  // edges of node i: [end[i-1], end[i])
  mutable std::vector<double> adjoint_;
};

/// Makes a tape active on the current thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

namespace detail {
inline Tape& tape() {
  Tape* t = Tape::active();
  if (t == nullptr) throw std::logic_error("autodiff: no active tape");
  return *t;
}
inline Var unary(const Var& a, double value, double partial) {
  if (a.is_constant()) return Var(value);
  Tape& t = tape();
  t.push_edge(a.id, partial);
  return t.finish(value);
}
inline Var binary(const Var& a, const Var& b, double value, double pa, double pb) {
  if (a.is_constant() && b.is_constant()) return Var(value);
  Tape& t = tape();
  t.push_edge(a.id, pa);
  t.push_edge(b.id, pb);
  return t.finish(value);
}
}  // namespace detail

inline Var operator+(const Var& a, const Var& b) { return detail::binary(a, b, a.value + b.value, 1.0, 1.0); }
inline Var operator-(const Var& a, const Var& b) { return detail::binary(a, b, a.value - b.value, 1.0, -1.0); }
inline Var operator*(const Var& a, const Var& b) { return detail::binary(a, b, a.value * b.value, b.value, a.value); }
inline Var operator/(const Var& a, const Var& b) {
  const double inv = 1.0 / b.value;
  return detail::binary(a, b, a.value * inv, inv, -a.value * inv * inv);
}
inline Var operator-(const Var& a) { return detail::unary(a, -a.value, -1.0); }
inline Var operator+(const Var& a, double b) { return detail::unary(a, a.value + b, 1.0); }
inline Var operator+(double a, const Var& b) { return detail::unary(b, a + b.value, 1.0); }
inline Var operator-(const Var& a, double b) { return detail::unary(a, a.value - b, 1.0); }
inline Var operator-(double a, const Var& b) { return detail::unary(b, a - b.value, -1.0); }
inline Var operator*(const Var& a, double b) { return detail::unary(a, a.value * b, b); }
inline Var operator*(double a, const Var& b) { return detail::unary(b, a * b.value, a); }
inline Var operator/(const Var& a, double b) { return detail::unary(a, a.value / b, 1.0 / b); }
inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }

inline Var sqrt(const Var& a) {
  const double s = std::sqrt(a.value);
  return detail::unary(a, s, 0.5 / s);
}
inline Var exp(const Var& a) {
  const double e = std::exp(a.value);
  return detail::unary(a, e, e);
}
inline Var log(const Var& a) { return detail::unary(a, std::log(a.value), 1.0 / a.value); }
inline Var sin(const Var& a) { return detail::unary(a, std::sin(a.value), std::cos(a.value)); }
inline Var cos(const Var& a) { return detail::unary(a, std::cos(a.value), -std::sin(a.value)); }

/// x * sigmoid(x)
inline double silu(double x) { return x / (1.0 + std::exp(-x)); }
inline Var silu(const Var& a) {
  const double s = 1.0 / (1.0 + std::exp(-a.value));
  return detail::unary(a, a.value * s, s * (1.0 + a.value * (1.0 - s)));
}

inline double value(double x) { return x; }
inline double value(const Var& x) { return x.value; }

// ---------------------------------------------------------------------------
// Fused kernels. Strided access: element i of x is x[i * stride].

inline double sum(const double* x, std::size_t n, std::size_t stride = 1) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i * stride];
  return s;
}
Var sum(const Var* x, std::size_t n, std::size_t stride = 1);

inline double dot(const double* a, std::size_t sa, const double* b, std::size_t sb, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i * sa] * b[i * sb];
  return s;
}
Var dot(const Var* a, std::size_t sa, const Var* b, std::size_t sb, std::size_t n);
Var dot(const Var* a, std::size_t sa, const double* b, std::size_t sb, std::size_t n);
inline Var dot(const double* a, std::size_t sa, const Var* b, std::size_t sb, std::size_t n) { return dot(b, sb, a, sa, n); }

/// Builds one node from explicit (parent, partial) pairs.
Var combine(double value, std::span<const Var> parents, std::span<const double> partials);

}  // namespace tensorjump::ad
