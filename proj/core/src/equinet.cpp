#include "tensorjump/equinet.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "tensorjump/log.hpp"

namespace tensorjump::equinet {

using ad::Var;
using irreps::CgTensor;
using irreps::degree_dim;

namespace {

// Channel-wise Clebsch-Gordan coupling of a (2l1+1) and b (2l2+1) into out (2l3+1).
void couple(const CgTensor& cg, const double* a, const double* b, double* out) {
  const int d3 = degree_dim(cg.l3);
  for (int m3 = 0; m3 < d3; ++m3) {
    double s = 0.0;
    for (int e = cg.m3_offset[m3]; e < cg.m3_offset[m3 + 1]; ++e) {
      const auto& c = cg.by_m3[static_cast<std::size_t>(e)];
      s += c.value * a[c.m1] * b[c.m2];
    }
    out[m3] = s;
  }
}

void couple(const CgTensor& cg, const Var* a, const Var* b, Var* out) {
  const int d3 = degree_dim(cg.l3);
  ad::Tape* t = ad::Tape::active();
  for (int m3 = 0; m3 < d3; ++m3) {
    double s = 0.0;
    for (int e = cg.m3_offset[m3]; e < cg.m3_offset[m3 + 1]; ++e) {
      const auto& c = cg.by_m3[static_cast<std::size_t>(e)];
      s += c.value * a[c.m1].value * b[c.m2].value;
    }
    if (t == nullptr) {
      out[m3] = Var(s);
      continue;
    }
    for (int e = cg.m3_offset[m3]; e < cg.m3_offset[m3 + 1]; ++e) {
      const auto& c = cg.by_m3[static_cast<std::size_t>(e)];
      t->push_edge(a[c.m1].id, c.value * b[c.m2].value);
      t->push_edge(b[c.m2].id, c.value * a[c.m1].value);
    }
    out[m3] = t->finish(s);
  }
}

void couple(const CgTensor& cg, const Var* a, const double* b, Var* out) {
  const int d3 = degree_dim(cg.l3);
  ad::Tape* t = ad::Tape::active();
  for (int m3 = 0; m3 < d3; ++m3) {
    double s = 0.0;
    for (int e = cg.m3_offset[m3]; e < cg.m3_offset[m3 + 1]; ++e) {
      const auto& c = cg.by_m3[static_cast<std::size_t>(e)];
      s += c.value * a[c.m1].value * b[c.m2];
    }
    if (t == nullptr) {
      out[m3] = Var(s);
      continue;
    }
    for (int e = cg.m3_offset[m3]; e < cg.m3_offset[m3 + 1]; ++e) {
      const auto& c = cg.by_m3[static_cast<std::size_t>(e)];
      t->push_edge(a[c.m1].id, c.value * b[c.m2]);
    }
    out[m3] = t->finish(s);
  }
}

// w . x + b as a single tape node.
double affine(const double* w, const double* x, int n, double b) {
  double s = b;
  for (int i = 0; i < n; ++i) s += w[i] * x[i];
  return s;
}

template <class X>
Var affine(const Var* w, const X* x, int n, const Var& b) {
  double s = b.value;
  for (int i = 0; i < n; ++i) s += w[i].value * ad::value(x[i]);
  ad::Tape* t = ad::Tape::active();
  if (t == nullptr) return Var(s);
  for (int i = 0; i < n; ++i) {
    t->push_edge(w[i].id, ad::value(x[i]));
    if constexpr (std::is_same_v<X, Var>) t->push_edge(x[i].id, w[i].value);
  }
  t->push_edge(b.id, 1.0);
  return t->finish(s);
}

template <class T>
std::vector<T> to_scalar(std::span<const double> x) {
  return std::vector<T>(x.begin(), x.end());
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void BlockConfig::validate() const {
  if (H < 1) throw std::invalid_argument("BlockConfig: H must be >= 1");
  if (lmax < 1 || lmax > 3) throw std::invalid_argument("BlockConfig: lmax must be in [1, 3]");
  if (k < 1) throw std::invalid_argument("BlockConfig: k must be >= 1");
  if (L_cond < 1 || L_header < 1) throw std::invalid_argument("BlockConfig: L_cond and L_header must be >= 1");
  if (n_rbf < 1) throw std::invalid_argument("BlockConfig: radial basis count must be >= 1");
  if (!(cutoff > 0.0)) throw std::invalid_argument("BlockConfig: cutoff must be positive");
}

void NetConfig::validate() const {
  block.validate();
  if (state_spec.lmax() > block.lmax) {
    throw std::invalid_argument("NetConfig: state spec degree exceeds hidden lmax");
  }
  if (vocab < 1) throw std::invalid_argument("NetConfig: vocab must be >= 1");
  if (tau_dim < 2 || tau_dim % 2 != 0) throw std::invalid_argument("NetConfig: tau_dim must be even and >= 2");
}

std::string NetConfig::canonical() const {
  std::ostringstream os;
  os.precision(17);
  os << "H=" << block.H << ";lmax=" << block.lmax << ";k=" << block.k << ";L_cond=" << block.L_cond
     << ";L_header=" << block.L_header << ";n_rbf=" << block.n_rbf << ";cutoff=" << block.cutoff
     << ";state=" << state_spec.str() << ";vocab=" << vocab << ";tau_dim=" << tau_dim;
  return os.str();
}

std::uint64_t NetConfig::hash() const { return fnv1a(canonical()); }

// ---------------------------------------------------------------------------
// ParamLayout

std::size_t ParamLayout::add(std::string name, std::size_t size, InitKind init, double scale) {
  const std::size_t offset = total_;
  blocks_.push_back({std::move(name), offset, size, init, scale});
  total_ += size;
  return offset;
}

std::vector<double> ParamLayout::initialize(std::uint64_t seed) const {
  std::vector<double> flat(total_, 0.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& b : blocks_) {
    if (b.init == InitKind::zero) continue;
    for (std::size_t i = 0; i < b.size; ++i) flat[b.offset + i] = b.scale * normal(rng);
  }
  return flat;
}

// ---------------------------------------------------------------------------
// LinearMix

LinearMix::LinearMix(const IrrepsSpec& in, const IrrepsSpec& out, ParamLayout& layout, const std::string& name,
                     bool zero_init)
    : in_(in), out_(out) {
  for (const auto& b : out.blocks()) {
    const int h_in = in.multiplicity(b.degree);
    if (h_in == 0) continue;
    const std::size_t off =
        layout.add(name + ".l" + std::to_string(b.degree), static_cast<std::size_t>(b.multiplicity * h_in),
                   zero_init ? InitKind::zero : InitKind::normal, 1.0 / std::sqrt(static_cast<double>(h_in)));
    terms_.push_back({b.degree, h_in, b.multiplicity, in.offset(b.degree), out.offset(b.degree), off});
  }
}

template <class T>
void LinearMix::forward(const T* params, const T* x, T* y) const {
  std::fill(y, y + out_.dim(), T(0.0));
  for (const auto& t : terms_) {
    const int d = degree_dim(t.degree);
    const T* w = params + t.param_offset;
    for (int o = 0; o < t.h_out; ++o) {
      for (int m = 0; m < d; ++m) {
        y[t.out_offset + static_cast<std::size_t>(o * d + m)] =
            ad::dot(w + o * t.h_in, 1, x + t.in_offset + m, static_cast<std::size_t>(d), static_cast<std::size_t>(t.h_in));
      }
    }
  }
}

template <class T>
void LinearMix::forward_add(const T* params, const T* x, T* y) const {
  for (const auto& t : terms_) {
    const int d = degree_dim(t.degree);
    const T* w = params + t.param_offset;
    for (int o = 0; o < t.h_out; ++o) {
      for (int m = 0; m < d; ++m) {
        T& dst = y[t.out_offset + static_cast<std::size_t>(o * d + m)];
        dst = dst + ad::dot(w + o * t.h_in, 1, x + t.in_offset + m, static_cast<std::size_t>(d),
                            static_cast<std::size_t>(t.h_in));
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Mlp

Mlp::Mlp(int in, int width, int out, ParamLayout& layout, const std::string& name) : dims_{in, width, width, out} {
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    const int a = dims_[l], b = dims_[l + 1];
    offsets_.push_back(layout.add(name + ".W" + std::to_string(l), static_cast<std::size_t>(a * b), InitKind::normal,
                                  1.0 / std::sqrt(static_cast<double>(std::max(a, 1)))));
    offsets_.push_back(layout.add(name + ".b" + std::to_string(l), static_cast<std::size_t>(b), InitKind::zero));
  }
}

template <class T>
void Mlp::forward(const T* params, const T* x, T* y) const {
  std::vector<T> a(x, x + dims_.front());
  std::vector<T> b;
  const std::size_t layers = dims_.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const int n_in = dims_[l], n_out = dims_[l + 1];
    const T* w = params + offsets_[2 * l];
    const T* bias = params + offsets_[2 * l + 1];
    b.resize(static_cast<std::size_t>(n_out));
    for (int o = 0; o < n_out; ++o) {
      T v = affine(w + o * n_in, a.data(), n_in, bias[o]);
      b[static_cast<std::size_t>(o)] = l + 1 < layers ? ad::silu(v) : v;
    }
    std::swap(a, b);
  }
  std::copy(a.begin(), a.end(), y);
}

// ---------------------------------------------------------------------------
// SelfInteraction

SelfInteraction::SelfInteraction(const IrrepsSpec& in, const IrrepsSpec& out, int mlp_width, ParamLayout& layout,
                                 const std::string& name)
    : plan_(irreps::make_square_plan(in, in.lmax(), true)) {
  if (!in.has(0)) throw std::invalid_argument("SelfInteraction: input spec needs scalar (l=0) channels for the gate");
  gate_ = Mlp(in.multiplicity(0), mlp_width, static_cast<int>(plan_.output.channels()), layout, name + ".gate");
  mix_ = LinearMix(plan_.output, out, layout, name + ".mix");
}

namespace {

template <class T>
void tensor_square_into(const irreps::TensorSquarePlan& plan, const T* x, T* out) {
  const auto& in = plan.input;
  const auto& os = plan.output;
  for (const auto& b : in.blocks()) {
    if (!os.has(b.degree)) continue;
    const std::size_t n = static_cast<std::size_t>(b.multiplicity * degree_dim(b.degree));
    std::copy(x + in.offset(b.degree), x + in.offset(b.degree) + n, out + os.offset(b.degree));
  }
  for (std::size_t p = 0; p < plan.paths.size(); ++p) {
    const auto& path = plan.paths[p];
    const auto& cg = irreps::clebsch_gordan(path.l1, path.l2, path.l_out);
    const int d1 = degree_dim(path.l1), d2 = degree_dim(path.l2), d3 = degree_dim(path.l_out);
    for (int c = 0; c < plan.path_channels[p]; ++c) {
      couple(cg, x + in.offset(path.l1) + c * d1, x + in.offset(path.l2) + c * d2,
             out + os.offset(path.l_out) + (plan.path_channel_offset[p] + c) * d3);
    }
  }
}

}  // namespace

template <class T>
void SelfInteraction::forward(const T* params, const T* x, T* y) const {
  const auto& os = plan_.output;
  std::vector<T> sq(os.dim());
  tensor_square_into(plan_, x, sq.data());
  std::vector<T> g(static_cast<std::size_t>(gate_.out()));
  gate_.forward(params, x + plan_.input.offset(0), g.data());
  std::size_t ch = 0;
  for (const auto& b : os.blocks()) {
    const int d = degree_dim(b.degree);
    T* base = sq.data() + os.offset(b.degree);
    for (int c = 0; c < b.multiplicity; ++c, ++ch) {
      for (int m = 0; m < d; ++m) base[c * d + m] = g[ch] * base[c * d + m];
    }
  }
  mix_.forward(params, sq.data(), y);
}

std::vector<double> SelfInteraction::gate(std::span<const double> params, std::span<const double> node) const {
  std::vector<double> g(static_cast<std::size_t>(gate_.out()));
  gate_.forward(params.data(), node.data() + plan_.input.offset(0), g.data());
  return g;
}

TensorCloud SelfInteraction::apply(std::span<const double> params, const TensorCloud& x) const {
  if (!(x.spec() == in())) throw std::invalid_argument("SelfInteraction: spec mismatch");
  TensorCloud out(this->out(), x.size());
  out.positions() = x.positions();
  for (std::size_t i = 0; i < x.size(); ++i) forward(params.data(), x.feature(i).data(), out.feature(i).data());
  return out;
}

// ---------------------------------------------------------------------------
// Geometry

void radial_embedding(double r, int n_rbf, double cutoff, double* out) {
  const double spacing = n_rbf > 1 ? cutoff / (n_rbf - 1) : cutoff;
  const double envelope = r < cutoff ? 0.5 * (std::cos(std::numbers::pi * r / cutoff) + 1.0) : 0.0;
  for (int k = 0; k < n_rbf; ++k) {
    const double u = (r - k * spacing) / spacing;
    out[k] = std::exp(-0.5 * u * u) * envelope;
  }
}

Geometry build_geometry(std::span<const double> positions, int k, int n_rbf, double cutoff, int lmax) {
  if (positions.size() % 3 != 0) throw std::invalid_argument("build_geometry: positions must be n x 3");
  Geometry g;
  g.n = positions.size() / 3;
  const int available = g.n > 0 ? static_cast<int>(g.n) - 1 : 0;
  g.k = std::min(k, available);
  if (k > available) {
    static std::mutex mutex;
    static std::set<std::pair<std::size_t, int>> warned;
    std::lock_guard<std::mutex> lock(mutex);
    if (warned.insert({g.n, k}).second) {
      log::warn("kNN: k=" + std::to_string(k) + " exceeds N-1=" + std::to_string(available) + "; clamped");
    }
  }
  g.n_rbf = n_rbf;
  g.sh_dim = (lmax + 1) * (lmax + 1);
  g.neighbors.resize(g.n * static_cast<std::size_t>(g.k));
  g.rbf.resize(g.neighbors.size() * static_cast<std::size_t>(n_rbf));
  g.sh.resize(g.neighbors.size() * static_cast<std::size_t>(g.sh_dim));
  std::vector<std::pair<double, int>> order;
  for (std::size_t i = 0; i < g.n; ++i) {
    const Vec3 pi(positions[3 * i], positions[3 * i + 1], positions[3 * i + 2]);
    order.clear();
    for (std::size_t j = 0; j < g.n; ++j) {
      if (j == i) continue;
      const Vec3 pj(positions[3 * j], positions[3 * j + 1], positions[3 * j + 2]);
      order.emplace_back((pj - pi).squaredNorm(), static_cast<int>(j));
    }
    std::partial_sort(order.begin(), order.begin() + g.k, order.end());
    for (int e = 0; e < g.k; ++e) {
      const std::size_t slot = i * static_cast<std::size_t>(g.k) + static_cast<std::size_t>(e);
      const int j = order[static_cast<std::size_t>(e)].second;
      g.neighbors[slot] = j;
      const Vec3 pj(positions[3 * static_cast<std::size_t>(j)], positions[3 * static_cast<std::size_t>(j) + 1],
                    positions[3 * static_cast<std::size_t>(j) + 2]);
      const Vec3 offset = pj - pi;
      irreps::spherical_harmonics_upto(lmax, offset,
                                       std::span<double>(g.sh.data() + slot * static_cast<std::size_t>(g.sh_dim),
                                                         static_cast<std::size_t>(g.sh_dim)));
      radial_embedding(offset.norm(), n_rbf, cutoff, g.rbf.data() + slot * static_cast<std::size_t>(n_rbf));
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// SpatialConvolution

SpatialConvolution::SpatialConvolution(const IrrepsSpec& hidden, int n_rbf, int mlp_width, ParamLayout& layout,
                                       const std::string& name)
    : hidden_(hidden), n_rbf_(n_rbf) {
  if (!hidden.has(0)) throw std::invalid_argument("SpatialConvolution: spec needs scalar channels");
  const int lmax = hidden.lmax();
  std::vector<irreps::IrrepBlock> blocks;
  struct Pending {
    int l1, l2, lo, channel_offset;
  };
  std::vector<Pending> pending;
  for (int lo = 0; lo <= lmax; ++lo) {
    int channels = 0;
    for (const auto& b : hidden.blocks()) {
      for (int l2 = 0; l2 <= lmax; ++l2) {
        if (!irreps::triangle(b.degree, l2, lo)) continue;
        pending.push_back({b.degree, l2, lo, channels});
        channels += b.multiplicity;
      }
    }
    if (channels > 0) blocks.push_back({lo, channels});
  }
  tp_spec_ = IrrepsSpec(std::move(blocks));
  for (const auto& p : pending) {
    paths_.push_back({p.l1, p.l2, p.lo,
                      tp_spec_.offset(p.lo) + static_cast<std::size_t>(p.channel_offset * degree_dim(p.lo))});
  }
  const int h0 = hidden.multiplicity(0);
  gate_ = Mlp(n_rbf + 2 * h0, mlp_width, static_cast<int>(hidden.channels()), layout, name + ".gate");
  message_mix_ = LinearMix(tp_spec_, hidden, layout, name + ".message");
  update_mix_ = LinearMix(hidden, hidden, layout, name + ".update");
}

template <class T>
void SpatialConvolution::forward(const T* params, const Geometry& geo, const T* x, T* y) const {
  const std::size_t dim = hidden_.dim();
  const int h0 = hidden_.multiplicity(0);
  const std::size_t k = static_cast<std::size_t>(geo.k);
  std::vector<int> entry_channel(dim);
  {
    int ch = 0;
    for (const auto& b : hidden_.blocks()) {
      const int d = degree_dim(b.degree);
      for (int c = 0; c < b.multiplicity; ++c, ++ch) {
        for (int m = 0; m < d; ++m) entry_channel[hidden_.offset(b.degree) + static_cast<std::size_t>(c * d + m)] = ch;
      }
    }
  }
  std::vector<T> tp(tp_spec_.dim());
  std::vector<T> msg(dim);
  std::vector<T> gate(hidden_.channels());
  std::vector<T> gin(static_cast<std::size_t>(n_rbf_ + 2 * h0));
  std::vector<T> msgs(k * dim);
  std::vector<T> acc(dim);
  for (std::size_t i = 0; i < geo.n; ++i) {
    const T* xi = x + i * dim;
    for (std::size_t e = 0; e < k; ++e) {
      const std::size_t slot = i * k + e;
      const T* xj = x + static_cast<std::size_t>(geo.neighbors[slot]) * dim;
      const double* sh = geo.sh.data() + slot * static_cast<std::size_t>(geo.sh_dim);
      for (const auto& p : paths_) {
        const auto& cg = irreps::clebsch_gordan(p.l1, p.l2, p.l_out);
        const int d1 = degree_dim(p.l1), d3 = degree_dim(p.l_out);
        for (int c = 0; c < hidden_.multiplicity(p.l1); ++c) {
          couple(cg, xj + hidden_.offset(p.l1) + c * d1, sh + p.l2 * p.l2, tp.data() + p.out_offset + c * d3);
        }
      }
      message_mix_.forward(params, tp.data(), msg.data());
      const double* rbf = geo.rbf.data() + slot * static_cast<std::size_t>(n_rbf_);
      for (int r = 0; r < n_rbf_; ++r) gin[static_cast<std::size_t>(r)] = T(rbf[r]);
      for (int c = 0; c < h0; ++c) {
        gin[static_cast<std::size_t>(n_rbf_ + c)] = xj[c];
        gin[static_cast<std::size_t>(n_rbf_ + h0 + c)] = xi[c];
      }
      gate_.forward(params, gin.data(), gate.data());
      for (std::size_t q = 0; q < dim; ++q) msgs[e * dim + q] = gate[static_cast<std::size_t>(entry_channel[q])] * msg[q];
    }
    if (k == 0) {
      std::copy(xi, xi + dim, acc.begin());
    } else {
      const double inv_k = 1.0 / static_cast<double>(k);
      for (std::size_t q = 0; q < dim; ++q) acc[q] = xi[q] + ad::sum(msgs.data() + q, k, dim) * inv_k;
    }
    update_mix_.forward(params, acc.data(), y + i * dim);
  }
}

TensorCloud SpatialConvolution::apply(std::span<const double> params, const TensorCloud& x, int k, double cutoff) const {
  if (!(x.spec() == hidden_)) throw std::invalid_argument("SpatialConvolution: spec mismatch");
  const Geometry geo = build_geometry(x.positions(), k, n_rbf_, cutoff, hidden_.lmax());
  TensorCloud out(hidden_, x.size());
  out.positions() = x.positions();
  forward(params.data(), geo, x.features().data(), out.features().data());
  return out;
}

// ---------------------------------------------------------------------------
// Layer norm

template <class T>
void layer_norm_node(const IrrepsSpec& spec, T* x, double eps) {
  using std::sqrt;
  for (const auto& b : spec.blocks()) {
    T* v = x + spec.offset(b.degree);
    const std::size_t n = static_cast<std::size_t>(b.multiplicity * degree_dim(b.degree));
    const double inv_h = 1.0 / static_cast<double>(b.multiplicity);
    if (b.degree == 0) {
      const T mean = ad::sum(v, n) * inv_h;
      for (std::size_t c = 0; c < n; ++c) v[c] = v[c] - mean;
      const T var = ad::dot(v, 1, v, 1, n) * inv_h;
      const T inv = T(1.0) / sqrt(var + eps);
      for (std::size_t c = 0; c < n; ++c) v[c] = v[c] * inv;
    } else {
      const T sq = ad::dot(v, 1, v, 1, n) * inv_h;
      const T inv = T(1.0) / sqrt(sq + eps);
      for (std::size_t c = 0; c < n; ++c) v[c] = v[c] * inv;
    }
  }
}

// ---------------------------------------------------------------------------
// Dnn

Dnn::Dnn(const IrrepsSpec& hidden, int L, int n_rbf, ParamLayout& layout, const std::string& name)
    : hidden_(hidden), n_rbf_(n_rbf) {
  if (L < 0) throw std::invalid_argument("Dnn: negative depth");
  const int width = hidden.multiplicity(0);
  first_ = SelfInteraction(hidden, hidden, width, layout, name + ".si_in");
  for (int l = 0; l < L; ++l) {
    const std::string prefix = name + ".block" + std::to_string(l);
    block_si_.emplace_back(hidden, hidden, width, layout, prefix + ".si");
    convs_.emplace_back(hidden, n_rbf, width, layout, prefix + ".conv");
  }
  std::vector<irreps::IrrepBlock> blocks;
  for (const auto& b : hidden.blocks()) blocks.push_back({b.degree, b.multiplicity * (L + 1)});
  concat_spec_ = IrrepsSpec(std::move(blocks));
  aggregate_ = LinearMix(concat_spec_, hidden, layout, name + ".aggregate");
  last_ = SelfInteraction(hidden, hidden, width, layout, name + ".si_out");
}

template <class T>
void Dnn::forward(const T* params, const Geometry& geo, const T* x, T* y) const {
  const std::size_t n = geo.n;
  const std::size_t dim = hidden_.dim();
  const std::size_t L = convs_.size();
  std::vector<std::vector<T>> hs(L + 1, std::vector<T>(n * dim));
  for (std::size_t i = 0; i < n; ++i) first_.forward(params, x + i * dim, hs[0].data() + i * dim);
  std::vector<T> a(n * dim), b(n * dim);
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t i = 0; i < n; ++i) block_si_[l].forward(params, hs[l].data() + i * dim, a.data() + i * dim);
    convs_[l].forward(params, geo, a.data(), b.data());
    auto& next = hs[l + 1];
    for (std::size_t q = 0; q < n * dim; ++q) next[q] = b[q] + hs[l][q];
    for (std::size_t i = 0; i < n; ++i) layer_norm_node(hidden_, next.data() + i * dim);
  }
  std::vector<T> cat(concat_spec_.dim());
  std::vector<T> agg(dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& blk : hidden_.blocks()) {
      const std::size_t len = static_cast<std::size_t>(blk.multiplicity * degree_dim(blk.degree));
      for (std::size_t s = 0; s <= L; ++s) {
        const T* src = hs[s].data() + i * dim + hidden_.offset(blk.degree);
        std::copy(src, src + len, cat.data() + concat_spec_.offset(blk.degree) + s * len);
      }
    }
    aggregate_.forward(params, cat.data(), agg.data());
    last_.forward(params, agg.data(), y + i * dim);
  }
}

TensorCloud Dnn::apply(std::span<const double> params, const TensorCloud& x, int k, double cutoff) const {
  if (!(x.spec() == hidden_)) throw std::invalid_argument("Dnn: spec mismatch");
  const Geometry geo = build_geometry(x.positions(), k, n_rbf_, cutoff, hidden_.lmax());
  TensorCloud out(hidden_, x.size());
  out.positions() = x.positions();
  forward(params.data(), geo, x.features().data(), out.features().data());
  return out;
}

// ---------------------------------------------------------------------------
// EquiNet

std::vector<double> tau_embedding(double tau, int dim) {
  std::vector<double> out(static_cast<std::size_t>(dim));
  for (int k = 0; k < dim / 2; ++k) {
    const double w = std::numbers::pi * std::pow(2.0, 0.5 * k);
    out[static_cast<std::size_t>(2 * k)] = std::sin(w * tau);
    out[static_cast<std::size_t>(2 * k + 1)] = std::cos(w * tau);
  }
  return out;
}

namespace {
const char* kHeadNames[4] = {"b_V", "b_P", "eta_V", "eta_P"};
}

EquiNet::EquiNet(NetConfig config) : config_(std::move(config)) {
  config_.validate();
  hidden_ = config_.hidden_spec();
  const auto& bc = config_.block;
  if (!config_.state_spec.empty()) {
    lift_ = LinearMix(config_.state_spec, hidden_, layout_, "cond.lift");
    has_lift_ = true;
  }
  embed_offset_ = layout_.add("cond.embed", static_cast<std::size_t>(config_.vocab * bc.H), InitKind::normal, 1.0);
  cond_dnn_ = Dnn(hidden_, bc.L_cond, bc.n_rbf, layout_, "cond.dnn");
  const IrrepsSpec vec_spec({{1, 1}});
  for (int h = 0; h < 4; ++h) {
    const bool is_v = h == drift_v || h == noise_v;
    if (is_v && config_.state_spec.empty()) continue;
    const std::string name = std::string("head.") + kHeadNames[h];
    Header& hd = headers_[h];
    hd.present = true;
    header_present_[h] = true;
    hd.from_cond = LinearMix(hidden_, hidden_, layout_, name + ".from_cond");
    if (!config_.state_spec.empty()) hd.from_state = LinearMix(config_.state_spec, hidden_, layout_, name + ".from_state");
    hd.from_disp = LinearMix(vec_spec, hidden_, layout_, name + ".from_disp");
    hd.tau_w = layout_.add(name + ".tau_W", static_cast<std::size_t>(bc.H * config_.tau_dim), InitKind::normal,
                           1.0 / std::sqrt(static_cast<double>(config_.tau_dim)));
    hd.tau_b = layout_.add(name + ".tau_b", static_cast<std::size_t>(bc.H), InitKind::zero);
    hd.dnn = Dnn(hidden_, bc.L_header, bc.n_rbf, layout_, name + ".dnn");
    hd.readout = LinearMix(hidden_, is_v ? config_.state_spec : vec_spec, layout_, name + ".readout", true);
  }
}

template <class T>
std::vector<T> EquiNet::condition(const T* params, std::span<const int> labels, const TensorCloud& x_t) const {
  if (labels.size() != x_t.size()) {
    throw std::invalid_argument("condition: " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(x_t.size()) + " nodes");
  }
  if (!(x_t.spec() == config_.state_spec)) throw std::invalid_argument("condition: state spec mismatch");
  const std::size_t n = x_t.size();
  const std::size_t dim = hidden_.dim();
  const int H = config_.block.H;
  std::vector<T> h(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels[i];
    if (label < 0 || label >= config_.vocab) {
      throw std::invalid_argument("condition: unknown residue label " + std::to_string(label));
    }
    T* hi = h.data() + i * dim;
    if (has_lift_) {
      const auto xi = to_scalar<T>(x_t.feature(i));
      lift_.forward(params, xi.data(), hi);
    }
    const T* emb = params + embed_offset_ + static_cast<std::size_t>(label * H);
    for (int c = 0; c < H; ++c) hi[c] = has_lift_ ? hi[c] + emb[c] : emb[c];
  }
  const auto& bc = config_.block;
  const Geometry geo = build_geometry(x_t.positions(), bc.k, bc.n_rbf, bc.cutoff, bc.lmax);
  std::vector<T> out(n * dim);
  cond_dnn_.forward(params, geo, h.data(), out.data());
  return out;
}

template <class T>
std::vector<T> EquiNet::run_header(const Header& hd, const T* params, const std::vector<T>& x_tilde,
                                   std::span<const double> p_t, const TensorCloud& x_tau, const Geometry& geo,
                                   const std::vector<double>& tau_emb, double disp_scale) const {
  const std::size_t n = x_tau.size();
  const std::size_t dim = hidden_.dim();
  const int H = config_.block.H;
  std::vector<T> fused(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    T* fi = fused.data() + i * dim;
    hd.from_cond.forward(params, x_tilde.data() + i * dim, fi);
    if (!config_.state_spec.empty()) {
      const auto xi = to_scalar<T>(x_tau.feature(i));
      hd.from_state.forward_add(params, xi.data(), fi);
    }
    const T disp[3] = {T(disp_scale * (x_tau.positions()[3 * i] - p_t[3 * i])),
                       T(disp_scale * (x_tau.positions()[3 * i + 1] - p_t[3 * i + 1])),
                       T(disp_scale * (x_tau.positions()[3 * i + 2] - p_t[3 * i + 2]))};
    hd.from_disp.forward_add(params, disp, fi);
    const T* w = params + hd.tau_w;
    const T* b = params + hd.tau_b;
    for (int c = 0; c < H; ++c) fi[c] = fi[c] + affine(w + c * config_.tau_dim, tau_emb.data(), config_.tau_dim, b[c]);
  }
  std::vector<T> hidden(n * dim);
  hd.dnn.forward(params, geo, fused.data(), hidden.data());
  const std::size_t out_dim = hd.readout.out().dim();
  std::vector<T> out(n * out_dim);
  for (std::size_t i = 0; i < n; ++i) hd.readout.forward(params, hidden.data() + i * dim, out.data() + i * out_dim);
  return out;
}

template <class T>
HeadOutputs<T> EquiNet::heads(const T* params, const std::vector<T>& x_tilde, std::span<const double> p_t,
                              const TensorCloud& x_tau, double tau, HeadSelection which, double disp_scale) const {
  if (!(x_tau.spec() == config_.state_spec)) throw std::invalid_argument("heads: latent state spec mismatch");
  if (p_t.size() != 3 * x_tau.size() || x_tilde.size() != x_tau.size() * hidden_.dim()) {
    throw std::invalid_argument("heads: conditioner output and latent state disagree on N");
  }
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("heads: tau outside [0, 1]");
  if (!std::isfinite(disp_scale)) throw std::invalid_argument("heads: non-finite displacement scale");
  const auto& bc = config_.block;
  const Geometry geo = build_geometry(x_tau.positions(), bc.k, bc.n_rbf, bc.cutoff, bc.lmax);
  const auto emb = tau_embedding(tau, config_.tau_dim);
  HeadOutputs<T> out;
  for (int h = 0; h < 4; ++h) {
    if (!headers_[h].present) continue;
    const bool is_drift = h == drift_v || h == drift_p;
    if ((is_drift && !which.drift) || (!is_drift && !which.noise)) continue;
    out.out[h] = run_header(headers_[h], params, x_tilde, p_t, x_tau, geo, emb, disp_scale);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Public double-precision API

EquiNetParams init_params(const NetConfig& config, std::uint64_t seed) {
  auto net = std::make_shared<const EquiNet>(config);
  EquiNetParams p{net, net->layout().initialize(seed)};
  return p;
}

std::map<std::string, std::vector<double>> unpack(const EquiNetParams& params) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& b : params.net->layout().blocks()) {
    out[b.name] = std::vector<double>(params.flat.begin() + static_cast<std::ptrdiff_t>(b.offset),
                                      params.flat.begin() + static_cast<std::ptrdiff_t>(b.offset + b.size));
  }
  return out;
}

EquiNetParams pack(std::shared_ptr<const EquiNet> net, const std::map<std::string, std::vector<double>>& blocks) {
  EquiNetParams p{net, std::vector<double>(net->num_params(), 0.0)};
  if (blocks.size() != net->layout().blocks().size()) throw std::invalid_argument("pack: block count mismatch");
  for (const auto& b : net->layout().blocks()) {
    const auto it = blocks.find(b.name);
    if (it == blocks.end()) throw std::invalid_argument("pack: missing block " + b.name);
    if (it->second.size() != b.size) throw std::invalid_argument("pack: size mismatch for block " + b.name);
    std::copy(it->second.begin(), it->second.end(), p.flat.begin() + static_cast<std::ptrdiff_t>(b.offset));
  }
  return p;
}

TensorCloud condition(std::span<const int> labels, const TensorCloud& x_t, const EquiNetParams& params) {
  const auto& net = *params.net;
  if (params.flat.size() != net.num_params()) throw std::invalid_argument("condition: parameter vector size mismatch");
  TensorCloud out(net.config().hidden_spec(), x_t.size());
  out.positions() = x_t.positions();
  out.features() = net.condition(params.flat.data(), labels, x_t);
  return out;
}

Prediction heads_forward(const TensorCloud& x_tilde, const TensorCloud& x_tau, double tau, const EquiNetParams& params,
                         HeadSelection which, double disp_scale) {
  const auto& net = *params.net;
  if (params.flat.size() != net.num_params()) throw std::invalid_argument("heads_forward: parameter vector size mismatch");
  if (!(x_tilde.spec() == net.config().hidden_spec())) throw std::invalid_argument("heads_forward: X~ spec mismatch");
  const auto outs = net.heads(params.flat.data(), x_tilde.features(), x_tilde.positions(), x_tau, tau, which, disp_scale);
  Prediction pred;
  pred.drift = TensorCloud(x_tau.spec(), x_tau.size());
  pred.noise = TensorCloud(x_tau.spec(), x_tau.size());
  pred.has_drift = which.drift;
  pred.has_noise = which.noise;
  auto fill = [&](TensorCloud& c, int hv, int hp) {
    if (!outs.out[hv].empty()) c.features() = outs.out[hv];
    if (!outs.out[hp].empty()) c.positions() = outs.out[hp];
    if (x_tau.has_mask()) c.set_mask(x_tau.mask());
  };
  fill(pred.drift, drift_v, drift_p);
  fill(pred.noise, noise_v, noise_p);
  return pred;
}

// ---------------------------------------------------------------------------
// Objective

namespace {

// 1/2 |y|^2 - y . target over the unmasked entries.
template <class T>
T quadratic_term(const std::vector<T>& y, const std::vector<double>& target, const std::vector<double>& weight) {
  std::vector<T> ya;
  std::vector<double> ta;
  ya.reserve(y.size());
  ta.reserve(y.size());
  for (std::size_t q = 0; q < y.size(); ++q) {
    if (weight.empty() || weight[q] != 0.0) {
      ya.push_back(y[q]);
      ta.push_back(target[q]);
    }
  }
  const std::size_t n = ya.size();
  return ad::dot(ya.data(), 1, ya.data(), 1, n) * 0.5 - ad::dot(ya.data(), 1, ta.data(), 1, n);
}

template <class T>
T sample_loss(const EquiNet& net, const T* params, const LossSample& s, double& drift_term, double& noise_term) {
  HeadSelection which{s.drift_target.has_value(), s.noise_target.has_value()};
  const auto x_tilde = net.condition(params, s.labels, s.x_t);
  const auto outs = net.heads(params, x_tilde, s.x_t.positions(), s.x_tau, s.tau, which, s.disp_scale);
  std::vector<double> vmask;
  if (s.x_tau.has_mask()) {
    for (std::size_t i = 0; i < s.x_tau.size(); ++i) {
      const auto m = s.x_tau.entry_mask(i);
      vmask.insert(vmask.end(), m.begin(), m.end());
    }
  }
  T total(0.0);
  auto term = [&](const TensorCloud& target, int hv, int hp) {
    require_same_shape(target, s.x_tau, "loss");
    T t(0.0);
    bool any = false;
    if (!outs.out[hp].empty()) {
      t = quadratic_term(outs.out[hp], target.positions(), {});
      any = true;
    }
    if (!outs.out[hv].empty()) {
      const T tv = quadratic_term(outs.out[hv], target.features(), vmask);
      t = any ? t + tv : tv;
    }
    return t;
  };
  bool any = false;
  if (which.drift) {
    const T t = term(*s.drift_target, drift_v, drift_p);
    drift_term = ad::value(t);
    total = t;
    any = true;
  }
  if (which.noise) {
    const T t = term(*s.noise_target, noise_v, noise_p);
    noise_term = ad::value(t);
    total = any ? total + t : t;
  }
  return total;
}

void check_finite(double drift, double noise, double tau) {
  if (!std::isfinite(drift)) {
    throw std::runtime_error("loss: non-finite drift term at tau=" + std::to_string(tau));
  }
  if (!std::isfinite(noise)) {
    throw std::runtime_error("loss: non-finite noise term at tau=" + std::to_string(tau));
  }
}

}  // namespace

LossResult loss_and_grad(const EquiNetParams& params, std::span<const LossSample> batch) {
  const auto& net = *params.net;
  const std::size_t P = net.num_params();
  if (params.flat.size() != P) throw std::invalid_argument("loss_and_grad: parameter vector size mismatch");
  if (batch.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
  LossResult res;
  res.grad.assign(P, 0.0);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  ad::Tape tape;
  std::vector<Var> leaves(P);
  for (const auto& s : batch) {
    tape.clear();
    ad::TapeScope scope(tape);
    for (std::size_t i = 0; i < P; ++i) leaves[i] = tape.variable(params.flat[i]);
    double drift = 0.0, noise = 0.0;
    const Var loss = sample_loss(net, leaves.data(), s, drift, noise);
    check_finite(drift, noise, s.tau);
    tape.accumulate_gradient(loss, res.grad, inv_b);
    res.loss += loss.value * inv_b;
    res.drift_term += drift * inv_b;
    res.noise_term += noise * inv_b;
  }
  return res;
}

LossResult loss_only(const EquiNetParams& params, std::span<const LossSample> batch) {
  const auto& net = *params.net;
  if (params.flat.size() != net.num_params()) throw std::invalid_argument("loss_only: parameter vector size mismatch");
  if (batch.empty()) throw std::invalid_argument("loss_only: empty batch");
  LossResult res;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (const auto& s : batch) {
    double drift = 0.0, noise = 0.0;
    const double loss = sample_loss(net, params.flat.data(), s, drift, noise);
    check_finite(drift, noise, s.tau);
    res.loss += loss * inv_b;
    res.drift_term += drift * inv_b;
    res.noise_term += noise * inv_b;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Explicit instantiations

#define TENSORJUMP_INSTANTIATE(T)                                                                              \
  template void LinearMix::forward<T>(const T*, const T*, T*) const;                                          \
  template void LinearMix::forward_add<T>(const T*, const T*, T*) const;                                      \
  template void Mlp::forward<T>(const T*, const T*, T*) const;                                                \
  template void SelfInteraction::forward<T>(const T*, const T*, T*) const;                                    \
  template void SpatialConvolution::forward<T>(const T*, const Geometry&, const T*, T*) const;                \
  template void layer_norm_node<T>(const IrrepsSpec&, T*, double);                                            \
  template void Dnn::forward<T>(const T*, const Geometry&, const T*, T*) const;                               \
  template std::vector<T> EquiNet::condition<T>(const T*, std::span<const int>, const TensorCloud&) const;    \
  template HeadOutputs<T> EquiNet::heads<T>(const T*, const std::vector<T>&, std::span<const double>,         \
                                            const TensorCloud&, double, HeadSelection, double) const;

TENSORJUMP_INSTANTIATE(double)
TENSORJUMP_INSTANTIATE(Var)

#undef TENSORJUMP_INSTANTIATE

}  // namespace tensorjump::equinet
