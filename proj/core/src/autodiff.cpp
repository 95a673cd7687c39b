#include "tensorjump/autodiff.hpp"

#include <algorithm>

namespace tensorjump::ad {

namespace {
thread_local Tape* g_active = nullptr;
}

Tape* Tape::active() { return g_active; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active) { g_active = &tape; }
TapeScope::~TapeScope() { g_active = previous_; }

std::vector<double> Tape::gradient(const Var& output) const {
  std::vector<double> adj(node_end_.size(), 0.0);
  if (output.is_constant()) return adj;
  adj[output.id] = 1.0;
  for (std::size_t i = output.id + 1; i-- > 0;) {
    const double g = adj[i];
    if (g == 0.0) continue;
    const std::uint32_t begin = i == 0 ? 0u : node_end_[i - 1];
    for (std::uint32_t e = begin; e < node_end_[i]; ++e) adj[edges_[e].parent] += g * edges_[e].partial;
  }
  return adj;
}

void Tape::accumulate_gradient(const Var& output, std::span<double> leaves, double seed) const {
  if (output.is_constant()) return;
  adjoint_.assign(output.id + 1, 0.0);
  adjoint_[output.id] = seed;
  for (std::size_t i = output.id + 1; i-- > 0;) {
    const double g = adjoint_[i];
    if (g == 0.0) continue;
    const std::uint32_t begin = i == 0 ? 0u : node_end_[i - 1];
    for (std::uint32_t e = begin; e < node_end_[i]; ++e) adjoint_[edges_[e].parent] += g * edges_[e].partial;
  }
  const std::size_t n = std::min(leaves.size(), adjoint_.size());
  for (std::size_t i = 0; i < n; ++i) leaves[i] += adjoint_[i];
}

Var sum(const Var* x, std::size_t n, std::size_t stride) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i * stride].value;
  Tape* t = Tape::active();
  if (t == nullptr) return Var(s);
  for (std::size_t i = 0; i < n; ++i) t->push_edge(x[i * stride].id, 1.0);
  return t->finish(s);
}

Var dot(const Var* a, std::size_t sa, const Var* b, std::size_t sb, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i * sa].value * b[i * sb].value;
  Tape* t = Tape::active();
  if (t == nullptr) return Var(s);
  for (std::size_t i = 0; i < n; ++i) {
    t->push_edge(a[i * sa].id, b[i * sb].value);
    t->push_edge(b[i * sb].id, a[i * sa].value);
  }
  return t->finish(s);
}

Var dot(const Var* a, std::size_t sa, const double* b, std::size_t sb, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i * sa].value * b[i * sb];
  Tape* t = Tape::active();
  if (t == nullptr) return Var(s);
  for (std::size_t i = 0; i < n; ++i) t->push_edge(a[i * sa].id, b[i * sb]);
  return t->finish(s);
}

Var combine(double value, std::span<const Var> parents, std::span<const double> partials) {
  if (parents.size() != partials.size()) throw std::invalid_argument("combine: size mismatch");
  Tape* t = Tape::active();
  if (t == nullptr) return Var(value);
  for (std::size_t i = 0; i < parents.size(); ++i) t->push_edge(parents[i].id, partials[i]);
  return t->finish(value);
}

}  // namespace tensorjump::ad
