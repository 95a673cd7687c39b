#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tensorjump/equinet.hpp"
#include "tensorjump/log.hpp"

using namespace tensorjump;
using namespace tensorjump::equinet;

namespace {

NetConfig tiny_config(int H = 3, int L = 1) {
  NetConfig c;
  c.block.H = H;
  c.block.lmax = 1;
  c.block.k = 3;
  c.block.L_cond = L;
  c.block.L_header = L;
  c.block.n_rbf = 4;
  c.block.cutoff = 6.0;
  c.state_spec = IrrepsSpec::parse("1x0e+1x1e");
  c.vocab = 5;
  c.tau_dim = 8;
  return c;
}

// Fresh parameters with every entry drawn at `scale`, so zero-initialised
// readouts do not hide anything.
EquiNetParams random_params(const NetConfig& c, std::uint64_t seed, double scale = 0.5) {
  auto p = init_params(c, seed);
  std::mt19937_64 rng(seed + 1000);
  std::normal_distribution<double> normal(0.0, scale);
  for (double& w : p.flat) w = normal(rng);
  return p;
}

TensorCloud random_cloud(const IrrepsSpec& spec, std::size_t n, std::mt19937_64& rng, double spread = 2.0) {
  return sample_gaussian(spec, n, NoiseScales{1.0, spread * spread}, rng);
}

std::vector<int> random_labels(std::size_t n, int vocab, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, vocab - 1);
  std::vector<int> out(n);
  for (int& l : out) l = u(rng);
  return out;
}

double max_diff(const TensorCloud& a, const TensorCloud& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.features().size(); ++k) m = std::max(m, std::abs(a.features()[k] - b.features()[k]));
  for (std::size_t k = 0; k < a.positions().size(); ++k) {
    m = std::max(m, std::abs(a.positions()[k] - b.positions()[k]));
  }
  return m;
}

TensorCloud permute(const TensorCloud& x, const std::vector<std::size_t>& perm) {
  TensorCloud out(x.spec(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.set_position(i, x.position(perm[i]));
    std::copy(x.feature(perm[i]).begin(), x.feature(perm[i]).end(), out.feature(i).begin());
  }
  return out;
}

struct ModuleFixture {
  ParamLayout layout;
  IrrepsSpec hidden = IrrepsSpec::uniform(1, 3);
  std::vector<double> params;
};

}  // namespace

// ---------------------------------------------------------------------------
// Building blocks

TEST(SelfInteraction, ZeroInZeroOut) {
  ModuleFixture f;
  SelfInteraction si(f.hidden, f.hidden, 3, f.layout, "si");
  f.params = f.layout.initialize(1);
  const auto y = si.apply(f.params, TensorCloud(f.hidden, 2));
  for (double v : y.features()) EXPECT_EQ(v, 0.0);
}

TEST(SelfInteraction, Equivariant) {
  ModuleFixture f;
  SelfInteraction si(f.hidden, f.hidden, 3, f.layout, "si");
  std::mt19937_64 rng(2);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    f.params = f.layout.initialize(static_cast<std::uint64_t>(trial));
    const auto x = random_cloud(f.hidden, 4, rng);
    const Mat3 R = irreps::random_rotation(rng);
    worst = std::max(worst, max_diff(si.apply(f.params, rotate(x, R)), rotate(si.apply(f.params, x), R)));
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(SelfInteraction, GateReadsScalarsOnly) {
  ModuleFixture f;
  SelfInteraction si(f.hidden, f.hidden, 3, f.layout, "si");
  f.params = f.layout.initialize(3);
  std::mt19937_64 rng(3);
  const auto x = random_cloud(f.hidden, 1, rng);
  auto scaled_vec = x;
  auto scaled_scalar = x;
  for (std::size_t k = f.hidden.offset(1); k < f.hidden.dim(); ++k) scaled_vec.features()[k] *= 2.5;
  for (std::size_t k = 0; k < f.hidden.offset(1); ++k) scaled_scalar.features()[k] *= 2.5;
  EXPECT_EQ(si.gate(f.params, x.feature(0)), si.gate(f.params, scaled_vec.feature(0)));
  EXPECT_NE(si.gate(f.params, x.feature(0)), si.gate(f.params, scaled_scalar.feature(0)));
  EXPECT_GT(max_diff(si.apply(f.params, x), si.apply(f.params, scaled_scalar)), 1e-6);
}

TEST(SpatialConvolution, EquivariantAndTranslationInvariant) {
  ModuleFixture f;
  SpatialConvolution conv(f.hidden, 4, 3, f.layout, "conv");
  std::mt19937_64 rng(4);
  double worst_rot = 0.0, worst_shift = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    f.params = f.layout.initialize(static_cast<std::uint64_t>(trial));
    const auto x = random_cloud(f.hidden, 6, rng);
    const Mat3 R = irreps::random_rotation(rng);
    const auto y = conv.apply(f.params, x, 3, 6.0);
    worst_rot = std::max(worst_rot, max_diff(conv.apply(f.params, rotate(x, R), 3, 6.0), rotate(y, R)));
    const auto shifted = conv.apply(f.params, translate(x, Vec3(3.0, -1.0, 7.5)), 3, 6.0);
    for (std::size_t k = 0; k < y.features().size(); ++k) {
      worst_shift = std::max(worst_shift, std::abs(shifted.features()[k] - y.features()[k]));
    }
    EXPECT_EQ(y.positions(), x.positions());
  }
  EXPECT_LT(worst_rot, 1e-12);
  EXPECT_LT(worst_shift, 1e-12);
}

TEST(SpatialConvolution, ClampsKWithWarning) {
  ModuleFixture f;
  SpatialConvolution conv(f.hidden, 4, 3, f.layout, "conv");
  f.params = f.layout.initialize(5);
  std::mt19937_64 rng(5);
  const auto before = log::warning_count();
  log::set_sink([](log::Level, std::string_view) {});
  const auto y = conv.apply(f.params, random_cloud(f.hidden, 1, rng), 7, 6.0);
  log::set_sink({});
  EXPECT_EQ(log::warning_count(), before + 1);
  EXPECT_NE(log::last_warning().find("clamped"), std::string::npos);
  for (double v : y.features()) EXPECT_TRUE(std::isfinite(v));
}

TEST(SpatialConvolution, CoincidentPointsRejected) {
  ModuleFixture f;
  SpatialConvolution conv(f.hidden, 4, 3, f.layout, "conv");
  f.params = f.layout.initialize(6);
  TensorCloud x(f.hidden, 3);
  x.set_position(1, Vec3(1, 0, 0));
  EXPECT_THROW(conv.apply(f.params, x, 2, 6.0), irreps::DegenerateDirection);
}

TEST(Dnn, EquivariantAndKeepsPositions) {
  ModuleFixture f;
  Dnn dnn(f.hidden, 2, 4, f.layout, "dnn");
  std::mt19937_64 rng(7);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    f.params = f.layout.initialize(static_cast<std::uint64_t>(trial));
    const auto x = random_cloud(f.hidden, 5, rng);
    const Mat3 R = irreps::random_rotation(rng);
    const auto y = dnn.apply(f.params, x, 3, 6.0);
    EXPECT_EQ(y.positions(), x.positions());
    worst = std::max(worst, max_diff(dnn.apply(f.params, rotate(x, R), 3, 6.0), rotate(y, R)));
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(Dnn, ZeroDepthUsesOnlyPointwisePath) {
  ModuleFixture f;
  Dnn dnn(f.hidden, 0, 4, f.layout, "dnn");
  f.params = f.layout.initialize(8);
  std::mt19937_64 rng(8);
  const auto x = random_cloud(f.hidden, 4, rng);
  // Without convolutions a node's output cannot depend on the others.
  auto moved = x;
  moved.set_position(1, x.position(1) + Vec3(0.5, 0.5, 0.5));
  for (double& v : moved.feature(2)) v += 1.0;
  const auto a = dnn.apply(f.params, x, 3, 6.0);
  const auto b = dnn.apply(f.params, moved, 3, 6.0);
  for (std::size_t k = 0; k < f.hidden.dim(); ++k) EXPECT_EQ(a.feature(0)[k], b.feature(0)[k]);
}

TEST(LayerNormNode, NormalisesVectorChannel) {
  const IrrepsSpec spec = IrrepsSpec::parse("1x1e");
  double v[3] = {3.0, 0.0, 4.0};
  layer_norm_node(spec, v);
  EXPECT_NEAR(std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]), 1.0, 1e-7);
  EXPECT_NEAR(v[2] / v[0], 4.0 / 3.0, 1e-12);
}

// ---------------------------------------------------------------------------
// Full model

TEST(EquiNet, InitDeterministic) {
  const auto c = tiny_config();
  const auto a = init_params(c, 11);
  const auto b = init_params(c, 11);
  const auto d = init_params(c, 12);
  EXPECT_EQ(a.flat, b.flat);
  EXPECT_NE(a.flat, d.flat);
  EXPECT_EQ(a.flat.size(), a.net->num_params());
}

TEST(EquiNet, PackUnpackRoundTrip) {
  const auto p = random_params(tiny_config(), 13);
  const auto blocks = unpack(p);
  const auto q = pack(p.net, blocks);
  EXPECT_EQ(p.flat, q.flat);
  auto broken = blocks;
  broken.begin()->second.push_back(0.0);
  EXPECT_THROW(pack(p.net, broken), std::invalid_argument);
}

TEST(EquiNet, ZeroInitHeadsGiveZeroOutputs) {
  const auto c = tiny_config();
  const auto p = init_params(c, 14);
  std::mt19937_64 rng(14);
  const auto x_t = random_cloud(c.state_spec, 4, rng);
  const auto x_tau = random_cloud(c.state_spec, 4, rng);
  const auto labels = random_labels(4, c.vocab, rng);
  const auto pred = heads_forward(condition(labels, x_t, p), x_tau, 0.3, p);
  EXPECT_EQ(norm(pred.drift), 0.0);
  EXPECT_EQ(norm(pred.noise), 0.0);
}

TEST(EquiNet, ConditionAndHeadsEquivariant) {
  const auto c = tiny_config();
  std::mt19937_64 rng(15);
  double worst_cond = 0.0, worst_heads = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = random_params(c, 100 + static_cast<std::uint64_t>(trial));
    const auto x_t = random_cloud(c.state_spec, 5, rng);
    const auto x_tau = random_cloud(c.state_spec, 5, rng);
    const auto labels = random_labels(5, c.vocab, rng);
    const Mat3 R = irreps::random_rotation(rng);
    const auto xt_r = rotate(x_t, R);
    const auto cond = condition(labels, x_t, p);
    const auto cond_r = condition(labels, xt_r, p);
    worst_cond = std::max(worst_cond, max_diff(cond_r, rotate(cond, R)));
    const auto pred = heads_forward(cond, x_tau, 0.4, p);
    const auto pred_r = heads_forward(cond_r, rotate(x_tau, R), 0.4, p);
    worst_heads = std::max(worst_heads, max_diff(pred_r.drift, rotate(pred.drift, R)));
    worst_heads = std::max(worst_heads, max_diff(pred_r.noise, rotate(pred.noise, R)));
  }
  EXPECT_LT(worst_cond, 1e-10);
  EXPECT_LT(worst_heads, 1e-10);
}

TEST(EquiNet, TranslationInvariantOutputs) {
  const auto c = tiny_config();
  const auto p = random_params(c, 16);
  std::mt19937_64 rng(16);
  const auto x_t = random_cloud(c.state_spec, 5, rng);
  const auto x_tau = random_cloud(c.state_spec, 5, rng);
  const auto labels = random_labels(5, c.vocab, rng);
  const Vec3 shift(10.0, -4.0, 2.5);
  const auto pred = heads_forward(condition(labels, x_t, p), x_tau, 0.6, p);
  const auto pred_s = heads_forward(condition(labels, translate(x_t, shift), p), translate(x_tau, shift), 0.6, p);
  EXPECT_LT(max_diff(pred.drift, pred_s.drift), 1e-10);
  EXPECT_LT(max_diff(pred.noise, pred_s.noise), 1e-10);
}

TEST(EquiNet, PermutationEquivariant) {
  const auto c = tiny_config();
  const auto p = random_params(c, 17);
  std::mt19937_64 rng(17);
  const auto x_t = random_cloud(c.state_spec, 6, rng);
  const auto x_tau = random_cloud(c.state_spec, 6, rng);
  const auto labels = random_labels(6, c.vocab, rng);
  std::vector<std::size_t> perm(6);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> labels_p(6);
  for (std::size_t i = 0; i < 6; ++i) labels_p[i] = labels[perm[i]];
  const auto pred = heads_forward(condition(labels, x_t, p), x_tau, 0.2, p);
  const auto pred_p = heads_forward(condition(labels_p, permute(x_t, perm), p), permute(x_tau, perm), 0.2, p);
  EXPECT_LT(max_diff(pred_p.drift, permute(pred.drift, perm)), 1e-10);
  EXPECT_LT(max_diff(pred_p.noise, permute(pred.noise, perm)), 1e-10);
}

TEST(EquiNet, SensitiveToLabelsAndTau) {
  const auto c = tiny_config();
  const auto p = random_params(c, 18);
  std::mt19937_64 rng(18);
  const auto x_t = random_cloud(c.state_spec, 4, rng);
  const auto x_tau = random_cloud(c.state_spec, 4, rng);
  const std::vector<int> a{0, 1, 2, 3}, b{3, 1, 2, 0};
  EXPECT_GT(max_diff(condition(a, x_t, p), condition(b, x_t, p)), 1e-6);
  const auto cond = condition(a, x_t, p);
  EXPECT_GT(max_diff(heads_forward(cond, x_tau, 0.0, p).drift, heads_forward(cond, x_tau, 0.5, p).drift), 1e-6);
  // Determinism.
  EXPECT_TRUE(condition(a, x_t, p).bitwise_equal(cond));
}

TEST(EquiNet, InputValidation) {
  const auto c = tiny_config();
  const auto p = init_params(c, 19);
  std::mt19937_64 rng(19);
  const auto x = random_cloud(c.state_spec, 3, rng);
  EXPECT_THROW(condition(std::vector<int>{0, 1, 9}, x, p), std::invalid_argument);
  EXPECT_THROW(condition(std::vector<int>{0, 1}, x, p), std::invalid_argument);
  const auto cond = condition(std::vector<int>{0, 1, 2}, x, p);
  EXPECT_THROW(heads_forward(cond, random_cloud(c.state_spec, 4, rng), 0.5, p), std::invalid_argument);
  EXPECT_THROW(heads_forward(cond, x, 1.5, p), std::invalid_argument);
}

TEST(EquiNet, EmptyStateSpecHasPositionHeadsOnly) {
  auto c = tiny_config();
  c.state_spec = IrrepsSpec();
  const auto p = random_params(c, 20);
  EXPECT_FALSE(p.net->has_head(drift_v));
  EXPECT_TRUE(p.net->has_head(drift_p));
  std::mt19937_64 rng(20);
  const auto x_t = random_cloud(c.state_spec, 4, rng);
  const auto x_tau = random_cloud(c.state_spec, 4, rng);
  const auto pred = heads_forward(condition(std::vector<int>{0, 0, 1, 1}, x_t, p), x_tau, 0.5, p);
  EXPECT_GT(norm(pred.drift), 0.0);
}

// ---------------------------------------------------------------------------
// Objective

namespace {

std::vector<LossSample> random_batch(const NetConfig& c, std::size_t n, std::size_t count, std::mt19937_64& rng) {
  std::vector<LossSample> batch;
  for (std::size_t b = 0; b < count; ++b) {
    LossSample s;
    s.labels = random_labels(n, c.vocab, rng);
    s.x_t = random_cloud(c.state_spec, n, rng);
    s.x_tau = random_cloud(c.state_spec, n, rng);
    s.tau = 0.25 + 0.5 * static_cast<double>(b) / static_cast<double>(count);
    s.drift_target = random_cloud(c.state_spec, n, rng);
    s.noise_target = random_cloud(c.state_spec, n, rng);
    batch.push_back(std::move(s));
  }
  return batch;
}

}  // namespace

TEST(Loss, ZeroAtZeroInitHeads) {
  const auto c = tiny_config();
  const auto p = init_params(c, 21);
  std::mt19937_64 rng(21);
  const auto batch = random_batch(c, 3, 2, rng);
  const auto r = loss_and_grad(p, batch);
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.drift_term, 0.0);
  EXPECT_EQ(r.noise_term, 0.0);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  const auto c = tiny_config(2, 1);
  auto p = random_params(c, 22, 0.4);
  std::mt19937_64 rng(22);
  const auto batch = random_batch(c, 3, 2, rng);
  const auto r = loss_and_grad(p, batch);
  EXPECT_NEAR(r.loss, loss_only(p, batch).loss, 1e-12);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double h = 1e-6;
  double worst = 0.0;
  for (int dir = 0; dir < 20; ++dir) {
    std::vector<double> d(p.flat.size());
    for (double& x : d) x = normal(rng);
    double analytic = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) analytic += r.grad[i] * d[i];
    auto shifted = p;
    for (std::size_t i = 0; i < d.size(); ++i) shifted.flat[i] = p.flat[i] + h * d[i];
    const double up = loss_only(shifted, batch).loss;
    for (std::size_t i = 0; i < d.size(); ++i) shifted.flat[i] = p.flat[i] - h * d[i];
    const double down = loss_only(shifted, batch).loss;
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - analytic) / std::max(std::abs(analytic), 1e-8));
  }
  EXPECT_LE(worst, 1e-5);
}

TEST(Loss, MatchesExplicitDotProducts) {
  const auto c = tiny_config();
  const auto p = random_params(c, 23);
  std::mt19937_64 rng(23);
  const auto batch = random_batch(c, 4, 1, rng);
  const auto& s = batch[0];
  const auto pred = heads_forward(condition(s.labels, s.x_t, p), s.x_tau, s.tau, p);
  const double expect = 0.5 * dot(pred.drift, pred.drift) - dot(pred.drift, *s.drift_target) +
                        0.5 * dot(pred.noise, pred.noise) - dot(pred.noise, *s.noise_target);
  EXPECT_NEAR(loss_only(p, batch).loss, expect, 1e-10);
}

TEST(Loss, DecreasesUnderGradientDescent) {
  const auto c = tiny_config(2, 1);
  auto p = random_params(c, 24, 0.3);
  std::mt19937_64 rng(24);
  const auto batch = random_batch(c, 3, 1, rng);
  const double start = loss_only(p, batch).loss;
  for (int step = 0; step < 200; ++step) {
    const auto r = loss_and_grad(p, batch);
    for (std::size_t i = 0; i < p.flat.size(); ++i) p.flat[i] -= 0.01 * r.grad[i];
  }
  EXPECT_LT(loss_only(p, batch).loss, start - 0.1 * std::abs(start));
}

TEST(Loss, NonFiniteTermIsNamed) {
  const auto c = tiny_config();
  const auto p = random_params(c, 25);
  std::mt19937_64 rng(25);
  auto batch = random_batch(c, 3, 1, rng);
  batch[0].noise_target->features()[0] = NAN;
  try {
    loss_only(p, batch);
    FAIL() << "expected a non-finite loss error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("noise"), std::string::npos);
  }
}
