#pragma once

// SO(3)-equivariant network over tensor clouds: Self-Interaction, Spatial
// Convolution, the residual deep stack, a conditioner and four headers.
//
// All learnable weights live in one flat vector described by a ParamLayout.
// Modules only store offsets into it, so the same forward code runs on
// plain doubles (inference) and on ad::Var (training) via templates.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tensorjump/autodiff.hpp"
#include "tensorjump/irreps.hpp"
#include "tensorjump/tensorcloud.hpp"

namespace tensorjump::equinet {

// ---------------------------------------------------------------------------
// Configuration

struct BlockConfig {
  int H = 8;
  int lmax = 1;
  int k = 16;
  int L_cond = 6;
  int L_header = 4;
  int n_rbf = 8;
  double cutoff = 12.0;
  void validate() const;
};

struct NetConfig {
  BlockConfig block;
  /// Spec of the transported node features (may be empty).
  IrrepsSpec state_spec;
  int vocab = 21;
  int tau_dim = 16;

  void validate() const;
  IrrepsSpec hidden_spec() const { return IrrepsSpec::uniform(block.lmax, block.H); }
  /// Canonical one-line description; hashed into checkpoints.
  std::string canonical() const;
  std::uint64_t hash() const;
};

// ---------------------------------------------------------------------------
// Flat parameter layout

enum class InitKind { normal, zero };

struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
  InitKind init = InitKind::normal;
  double scale = 1.0;  // standard deviation for InitKind::normal
};

class ParamLayout {
 public:
  std::size_t add(std::string name, std::size_t size, InitKind init, double scale = 1.0);
  std::size_t size() const { return total_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  /// Deterministic given seed: one mt19937_64 stream consumed block by block.
  std::vector<double> initialize(std::uint64_t seed) const;

 private:
  std::vector<ParamBlock> blocks_;
  std::size_t total_ = 0;
};

// ---------------------------------------------------------------------------
// Building blocks. forward() acts on one node unless stated otherwise.

/// Per-degree channel mixing without bias. Output degrees missing from the
/// input produce zeros and own no parameters.
class LinearMix {
 public:
  LinearMix() = default;
  LinearMix(const IrrepsSpec& in, const IrrepsSpec& out, ParamLayout& layout, const std::string& name,
            bool zero_init = false);
  const IrrepsSpec& in() const { return in_; }
  const IrrepsSpec& out() const { return out_; }
  template <class T>
  void forward(const T* params, const T* x, T* y) const;
  /// Adds the mix of x into y.
  template <class T>
  void forward_add(const T* params, const T* x, T* y) const;

 private:
  struct Term {
    int degree;
    int h_in;
    int h_out;
    std::size_t in_offset;
    std::size_t out_offset;
    std::size_t param_offset;
  };
  IrrepsSpec in_;
  IrrepsSpec out_;
  std::vector<Term> terms_;
};

/// in -> width -> width -> out with SiLU on the hidden layers.
class Mlp {
 public:
  Mlp() = default;
  Mlp(int in, int width, int out, ParamLayout& layout, const std::string& name);
  int in() const { return dims_.front(); }
  int out() const { return dims_.back(); }
  template <class T>
  void forward(const T* params, const T* x, T* y) const;

 private:
  std::vector<int> dims_;
  std::vector<std::size_t> offsets_;  // per layer: W (out x in) then bias (out)
};

/// V <- Linear(MLP(V^0) * (V + V^{x2})). Squares are limited to lmax of the
/// input spec; antisymmetric l1 == l2 paths are skipped since they vanish.
class SelfInteraction {
 public:
  SelfInteraction() = default;
  SelfInteraction(const IrrepsSpec& in, const IrrepsSpec& out, int mlp_width, ParamLayout& layout,
                  const std::string& name);
  const IrrepsSpec& in() const { return plan_.input; }
  const IrrepsSpec& out() const { return mix_.out(); }
  const irreps::TensorSquarePlan& plan() const { return plan_; }
  template <class T>
  void forward(const T* params, const T* x, T* y) const;
  /// Gate values MLP(V^0) for one node.
  std::vector<double> gate(std::span<const double> params, std::span<const double> node) const;
  /// Applies the layer to every node of a cloud; P is copied unchanged.
  TensorCloud apply(std::span<const double> params, const TensorCloud& x) const;

 private:
  irreps::TensorSquarePlan plan_;
  Mlp gate_;
  LinearMix mix_;
};

/// Neighbour lists and per-edge geometric embeddings for one set of positions.
struct Geometry {
  std::size_t n = 0;
  int k = 0;
  int n_rbf = 0;
  int sh_dim = 0;
  std::vector<int> neighbors;  // n * k
  std::vector<double> rbf;     // n * k * n_rbf
  std::vector<double> sh;      // n * k * sh_dim (degrees 0..lmax concatenated)
};

/// kNN by distance with ties broken by index; k is clamped to n - 1 with a
/// warning. Coincident neighbours raise irreps::DegenerateDirection.
Geometry build_geometry(std::span<const double> positions, int k, int n_rbf, double cutoff, int lmax);
/// Gaussian radial basis (centers uniform on [0, cutoff]) times a cosine envelope.
void radial_embedding(double r, int n_rbf, double cutoff, double* out);

class SpatialConvolution {
 public:
  SpatialConvolution() = default;
  SpatialConvolution(const IrrepsSpec& hidden, int n_rbf, int mlp_width, ParamLayout& layout, const std::string& name);
  const IrrepsSpec& spec() const { return hidden_; }
  /// All nodes at once: x and y are n * dim.
  template <class T>
  void forward(const T* params, const Geometry& geo, const T* x, T* y) const;
  TensorCloud apply(std::span<const double> params, const TensorCloud& x, int k, double cutoff) const;

 private:
  struct Path {
    int l1;
    int l2;
    int l_out;
    std::size_t out_offset;  // within the tensor-product node array
  };
  IrrepsSpec hidden_;
  IrrepsSpec tp_spec_;
  std::vector<Path> paths_;
  int n_rbf_ = 0;
  Mlp gate_;
  LinearMix message_mix_;
  LinearMix update_mix_;
};

/// Parameter-free equivariant layer norm applied in place to one node.
template <class T>
void layer_norm_node(const IrrepsSpec& spec, T* x, double eps = 1e-6);

/// H0 = SI(X); H_{l+1} = LN(Conv(SI(H_l)) + H_l); out = SI(Linear(H0 + ... + H_L)).
class Dnn {
 public:
  Dnn() = default;
  Dnn(const IrrepsSpec& hidden, int L, int n_rbf, ParamLayout& layout, const std::string& name);
  int depth() const { return static_cast<int>(convs_.size()); }
  const IrrepsSpec& spec() const { return hidden_; }
  template <class T>
  void forward(const T* params, const Geometry& geo, const T* x, T* y) const;
  TensorCloud apply(std::span<const double> params, const TensorCloud& x, int k, double cutoff) const;

 private:
  IrrepsSpec hidden_;
  int n_rbf_ = 1;
  IrrepsSpec concat_spec_;
  SelfInteraction first_;
  std::vector<SelfInteraction> block_si_;
  std::vector<SpatialConvolution> convs_;
  LinearMix aggregate_;
  SelfInteraction last_;
};

/// Sinusoidal embedding: (sin w_k tau, cos w_k tau), w_k = pi * 2^(k/2).
std::vector<double> tau_embedding(double tau, int dim);

// ---------------------------------------------------------------------------
// Full model

enum Head : int { drift_v = 0, drift_p = 1, noise_v = 2, noise_p = 3 };

struct HeadSelection {
  bool drift = true;
  bool noise = true;
};

template <class T>
struct HeadOutputs {
  // Indexed by Head. V heads are n * state_dim, P heads n * 3; empty when
  // the head was not evaluated or has no outputs.
  std::vector<T> out[4];
};

class EquiNet {
 public:
  explicit EquiNet(NetConfig config);

  const NetConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }
  std::size_t num_params() const { return layout_.size(); }
  bool has_head(Head h) const { return header_present_[h]; }

  /// X~ features (n * hidden_dim) for labels and the current state.
  template <class T>
  std::vector<T> condition(const T* params, std::span<const int> labels, const TensorCloud& x_t) const;

  /// Header outputs given conditioner features, the conditioner's positions
  /// (those of X_t) and the latent state.
  template <class T>
  HeadOutputs<T> heads(const T* params, const std::vector<T>& x_tilde, std::span<const double> p_t,
                       const TensorCloud& x_tau, double tau, HeadSelection which, double disp_scale = 1.0) const;

 private:
  struct Header {
    bool present = false;
    LinearMix from_cond;
    LinearMix from_state;
    LinearMix from_disp;
    std::size_t tau_w = 0;  // H x tau_dim
    std::size_t tau_b = 0;  // H
    Dnn dnn;
    LinearMix readout;
  };

  template <class T>
  std::vector<T> run_header(const Header& h, const T* params, const std::vector<T>& x_tilde, std::span<const double> p_t,
                            const TensorCloud& x_tau, const Geometry& geo, const std::vector<double>& tau_emb,
                            double disp_scale) const;

  NetConfig config_;
  ParamLayout layout_;
  IrrepsSpec hidden_;
  LinearMix lift_;
  bool has_lift_ = false;
  std::size_t embed_offset_ = 0;
  Dnn cond_dnn_;
  Header headers_[4];
  bool header_present_[4] = {false, false, false, false};
};

struct EquiNetParams {
  std::shared_ptr<const EquiNet> net;
  std::vector<double> flat;
};

EquiNetParams init_params(const NetConfig& config, std::uint64_t seed);

/// Named view of the flat vector, one entry per layout block.
std::map<std::string, std::vector<double>> unpack(const EquiNetParams& params);
EquiNetParams pack(std::shared_ptr<const EquiNet> net, const std::map<std::string, std::vector<double>>& blocks);

/// Conditioner output as a cloud: hidden spec, positions of x_t.
TensorCloud condition(std::span<const int> labels, const TensorCloud& x_t, const EquiNetParams& params);

struct Prediction {
  TensorCloud drift;
  TensorCloud noise;
  bool has_drift = false;
  bool has_noise = false;
};

/// Drift and noise clouds (state spec, mask of x_tau). Absent heads give zeros.
/// `disp_scale` multiplies the displacement P_tau - P_t fed to the headers.
Prediction heads_forward(const TensorCloud& x_tilde, const TensorCloud& x_tau, double tau, const EquiNetParams& params,
                         HeadSelection which = {}, double disp_scale = 1.0);

// ---------------------------------------------------------------------------
// Objective

/// One training term: the interpolant state and its regression targets.
struct LossSample {
  std::vector<int> labels;
  TensorCloud x_t;
  TensorCloud x_tau;
  double tau = 0.0;
  double disp_scale = 1.0;
  std::optional<TensorCloud> drift_target;  // d/dtau I + gamma' Z
  std::optional<TensorCloud> noise_target;  // Z
};

struct LossResult {
  double loss = 0.0;
  double drift_term = 0.0;
  double noise_term = 0.0;
  std::vector<double> grad;
};

/// Batch mean of 1/2|b|^2 - b.target_b + 1/2|eta|^2 - eta.Z with the exact
/// reverse-mode gradient. Throws on a non-finite loss, naming the term.
LossResult loss_and_grad(const EquiNetParams& params, std::span<const LossSample> batch);
/// Same objective without the gradient.
LossResult loss_only(const EquiNetParams& params, std::span<const LossSample> batch);

}  // namespace tensorjump::equinet
