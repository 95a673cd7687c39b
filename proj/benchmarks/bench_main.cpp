#include <benchmark/benchmark.h>

#include <algorithm>
#include <random>

#include "tensorjump/analysis.hpp"
#include "tensorjump/equinet.hpp"
#include "tensorjump/io.hpp"
#include "tensorjump/irreps.hpp"
#include "tensorjump/transport.hpp"
#include "tensorjump/worlds.hpp"

using namespace tensorjump;
using namespace tensorjump::irreps;
namespace tr = tensorjump::transport;

namespace {

equinet::NetConfig bench_net(int H, int L, std::size_t nodes) {
  equinet::NetConfig c;
  c.block.H = H;
  c.block.lmax = 1;
  c.block.k = static_cast<int>(std::min<std::size_t>(8, nodes - 1));
  c.block.L_cond = L;
  c.block.L_header = L;
  c.state_spec = IrrepsSpec::parse("1x0e+1x1e");
  c.vocab = 4;
  return c;
}

struct Fixture {
  equinet::EquiNetParams params;
  std::vector<int> labels;
  TensorCloud x_t, x_next;
  tr::Schedule schedule = tr::make_schedule(tr::Kind::two_sided);

  Fixture(std::size_t nodes, int H, int L) : params(equinet::init_params(bench_net(H, L, nodes), 1)) {
    std::mt19937_64 rng(2);
    const auto spec = bench_net(H, L, nodes).state_spec;
    x_t = sample_gaussian(spec, nodes, NoiseScales{1.0, 9.0}, rng);
    x_next = x_t;
    std::normal_distribution<double> step(0.0, 0.2);
    for (double& p : x_next.positions()) p += step(rng);
    labels.resize(nodes);
    for (std::size_t i = 0; i < nodes; ++i) labels[i] = static_cast<int>(i % 4);
    std::normal_distribution<double> w(0.0, 0.1);
    for (double& v : params.flat) v = w(rng);
  }
};

}  // namespace

static void BM_SphericalHarmonics(benchmark::State& state) {
  const int lmax = static_cast<int>(state.range(0));
  std::vector<double> out(static_cast<std::size_t>((lmax + 1) * (lmax + 1)));
  Vec3 r(0.3, -1.2, 0.7);
  for (auto _ : state) {
    spherical_harmonics_upto(lmax, r, out);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_SphericalHarmonics)->Arg(1)->Arg(2)->Arg(4);

static void BM_TensorSquare(benchmark::State& state) {
  const auto spec = IrrepsSpec::uniform(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  IrrepsArray v(spec);
  for (double& x : v.data) x = n(rng);
  const auto plan = make_square_plan(spec);
  for (auto _ : state) benchmark::DoNotOptimize(tensor_square(plan, v).data.data());
}
BENCHMARK(BM_TensorSquare)->Args({1, 8})->Args({1, 16})->Args({2, 8});

static void BM_HeadsForward(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)), 8, 2);
  const auto x_tilde = equinet::condition(f.labels, f.x_t, f.params);
  for (auto _ : state) {
    benchmark::DoNotOptimize(equinet::heads_forward(x_tilde, f.x_next, 0.4, f.params).drift.positions().data());
  }
}
BENCHMARK(BM_HeadsForward)->Arg(3)->Arg(16)->Arg(56);

static void BM_LossAndGrad(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)), 8, 2);
  std::mt19937_64 rng(4);
  const tr::Pair pair{&f.labels, &f.x_t, &f.x_next};
  std::vector<equinet::LossSample> batch;
  for (int b = 0; b < 8; ++b) batch.push_back(tr::make_loss_sample(pair, f.schedule, rng));
  for (auto _ : state) benchmark::DoNotOptimize(equinet::loss_and_grad(f.params, batch).loss);
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_LossAndGrad)->Arg(3)->Arg(16)->Unit(benchmark::kMillisecond);

static void BM_GenerateNext(benchmark::State& state) {
  Fixture f(16, 8, 2);
  tr::SampleConfig sc;
  sc.steps = static_cast<int>(state.range(0));
  sc.eps = 0.3;
  sc.profile = tr::EpsProfile::bridge;
  std::mt19937_64 rng(5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(tr::generate_next(f.labels, f.x_t, f.params, f.schedule, sc, rng).positions().data());
  }
}
BENCHMARK(BM_GenerateNext)->Arg(20)->Arg(100)->Unit(benchmark::kMillisecond);

static void BM_BdStepTrimer(benchmark::State& state) {
  const auto pot = worlds::default_trimer();
  worlds::BdConfig cfg;
  std::mt19937_64 rng(6);
  auto x = worlds::initial_state(pot);
  std::vector<double> scratch(x.size());
  for (auto _ : state) {
    worlds::bd_step(x, pot, cfg, rng, scratch);
    benchmark::DoNotOptimize(x.data());
  }
}
BENCHMARK(BM_BdStepTrimer);

static void BM_TicaFit(benchmark::State& state) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 1.0);
  analysis::Matrix x(state.range(0), 28);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  for (auto _ : state) benchmark::DoNotOptimize(analysis::tica_fit(x, 5).eigenvalues.data());
}
BENCHMARK(BM_TicaFit)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

static void BM_KMeans(benchmark::State& state) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  analysis::Matrix x(state.range(0), 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  for (auto _ : state) benchmark::DoNotOptimize(analysis::kmeans(x, 100, 9).inertia);
}
BENCHMARK(BM_KMeans)->Arg(10000)->Unit(benchmark::kMillisecond);

static void BM_TctRoundTrip(benchmark::State& state) {
  const auto pot = worlds::default_trimer();
  worlds::BdConfig cfg;
  cfg.steps = state.range(0);
  const auto data = worlds::generate_dataset(pot, cfg, {}, 1);
  const auto& traj = data.trajectories[0];
  for (auto _ : state) {
    const auto bytes = io::encode_tct(traj);
    benchmark::DoNotOptimize(io::decode_tct(bytes).frames.size());
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(io::encode_tct(traj).size()));
}
BENCHMARK(BM_TctRoundTrip)->Arg(10000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
