#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tensorjump/io.hpp"
#include "tensorjump/log.hpp"
#include "tensorjump_cli/commands.hpp"

using namespace tensorjump;
using namespace tensorjump::cli;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("tensorjump_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// A small trimer run that trains and samples in well under a second.
RunConfig tiny(const fs::path& dir) {
  const std::string text = R"(
[world]
steps = 4000
stride = 20
burn_in = 0
[model]
H = 2
L_cond = 1
L_header = 1
n_rbf = 4
tau_dim = 4
[train]
steps = 6
batch_size = 2
checkpoint_every = 2
lr_steps = 100
[sample]
n_steps = 5
steps = 4
sweep_eps = 0.3, 10
sweep_steps = 4, 6
sweep_n_steps = 30
[analysis]
clusters = 3
msm_lag = 1
bins = 8
)";
  auto c = RunConfig::parse(text, dir);
  c.deterministic = true;
  return c;
}

std::vector<std::uint8_t> bytes(const fs::path& p) { return io::read_bytes(p.string()); }

std::string text_of(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int data_rows(const fs::path& csv) {
  std::ifstream in(csv);
  std::string line;
  int rows = -1;  // header
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  return rows;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

TEST(Config, EveryKeyHasADefaultAndDumpRoundTrips) {
  const RunConfig c;
  const auto text = c.dump();
  EXPECT_EQ(RunConfig::parse(text).dump(), text);
  for (const auto& [key, doc] : documented_keys()) {
    EXPECT_NE(text.find(key.substr(key.find('.') + 1) + " = "), std::string::npos) << key;
    EXPECT_FALSE(doc.empty()) << key;
  }
}

TEST(Config, UnknownKeysAndSectionsAreRejected) {
  EXPECT_THROW(RunConfig::parse("[world]\nsteps = 10\nbogus = 1\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("[nowhere]\nsteps = 10\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("steps = 10\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("[world]\nsteps\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("[world]\nsteps = ten\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("[sample]\nprofile = wiggly\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("[train]\nbatch_size = 0\n"), ConfigError);
  try {
    RunConfig::parse("[world]\n\n# comment\nbogus = 1\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
  }
}

TEST(Config, ValuesCommentsAndDottedKeys) {
  const auto c = RunConfig::parse(
      "[schedule]\nkind = ddpm  # trailing comment\nsigma2_p = 5\n"
      "[sample]\nsweep_eps = 0.5, 2\nprofile = constant\nworld.dt = 0.002\n");
  EXPECT_EQ(c.schedule.kind, transport::Kind::ddpm);
  EXPECT_EQ(c.schedule.noise.sigma2_p, 5.0);
  EXPECT_EQ(c.sample.sweep_eps, (std::vector<double>{0.5, 2.0}));
  EXPECT_EQ(c.sample.profile, transport::EpsProfile::constant);
  EXPECT_EQ(c.world.bd.dt, 0.002);
}

TEST(Config, PathsResolveAgainstTheConfigFile) {
  const auto dir = fresh_dir("paths");
  {
    std::ofstream out(dir / "run.cfg");
    out << "[world]\nout_dir = d\n[train]\ncheckpoint = /abs/m.ckpt\n";
  }
  const auto c = RunConfig::load(dir / "run.cfg");
  EXPECT_EQ(fs::path(c.data_dir()), dir / "d");
  EXPECT_EQ(c.checkpoint_path(), "/abs/m.ckpt");
  EXPECT_EQ(fs::path(c.resolve("samples.tct")), dir / "samples.tct");
}

TEST(Config, SeedFlagReachesEverySection) {
  RunConfig c;
  c.set_seed(100);
  EXPECT_EQ(c.world.seed, 100u);
  EXPECT_EQ(c.model.seed, 101u);
  EXPECT_EQ(c.train.seed, 102u);
  EXPECT_EQ(c.sample.seed, 103u);
  EXPECT_EQ(c.analysis.seed, 104u);
  c.set("sample.eps", "2.5");
  EXPECT_EQ(c.sample.eps, 2.5);
  EXPECT_THROW(c.set("sample.nope", "1"), ConfigError);
}

// ---------------------------------------------------------------------------
// gen-data

TEST(GenData, ReadBackIsBitwiseAndDeterministic) {
  const auto dir = fresh_dir("gen");
  auto c = tiny(dir);
  const auto r = cmd_gen_data(c);
  ASSERT_EQ(r.trajectory_files.size(), 1u);
  const auto first = bytes(r.trajectory_files[0]);
  const auto back = io::read_tct(r.trajectory_files[0]);
  const auto& mem = r.dataset.trajectories[0];
  ASSERT_EQ(back.size(), mem.size());
  EXPECT_EQ(back.size(), 201u);
  for (std::size_t f = 0; f < mem.size(); ++f) EXPECT_TRUE(back.frames[f].bitwise_equal(mem.frames[f]));
  EXPECT_EQ(back.labels, mem.labels);
  EXPECT_EQ(io::read_pairs(r.pairs_file).size(), 200u);

  cmd_gen_data(c);
  EXPECT_EQ(bytes(r.trajectory_files[0]), first);
  c.world.seed = 2;
  cmd_gen_data(c);
  EXPECT_NE(bytes(r.trajectory_files[0]), first);
}

TEST(GenData, ZeroStepsWritesHeaderOnlyFile) {
  const auto dir = fresh_dir("gen0");
  auto c = tiny(dir);
  c.world.bd.steps = 0;
  const auto r = cmd_gen_data(c);
  const auto t = io::read_tct(r.trajectory_files[0]);
  EXPECT_EQ(t.size(), 0u);
  EXPECT_EQ(t.n_nodes, 3u);
  EXPECT_TRUE(io::read_pairs(r.pairs_file).empty());
}

TEST(GenData, DiskErrorsNameThePath) {
  const auto dir = fresh_dir("gen_err");
  { std::ofstream(dir / "blocker") << "x"; }
  auto c = tiny(dir);
  c.world.out_dir = "blocker/sub";
  try {
    cmd_gen_data(c);
    FAIL();
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("blocker"), std::string::npos) << e.what();
  }
}

// ---------------------------------------------------------------------------
// train

TEST(Train, OneStepCheckpointAndLogRows) {
  const auto dir = fresh_dir("train1");
  auto c = tiny(dir);
  cmd_gen_data(c);
  c.train.steps = 1;
  const auto r = cmd_train(c);
  EXPECT_EQ(io::read_checkpoint(r.checkpoint).step, 1u);
  EXPECT_EQ(data_rows(r.log), 0);  // no interval boundary reached

  c.train.steps = 7;
  const auto r7 = cmd_train(c);
  EXPECT_EQ(io::read_checkpoint(r7.checkpoint).step, 7u);
  EXPECT_EQ(data_rows(r7.log), 3);  // steps 2, 4, 6
  const auto model = load_model(r7.checkpoint);
  EXPECT_EQ(model.net.vocab, 3);
  EXPECT_DOUBLE_EQ(model.lag_interval, 0.02);
  EXPECT_GT(model.schedule.data_scales().delta_rms, 0.0);
}

TEST(Train, ResumeMatchesUninterruptedRun) {
  const auto dir = fresh_dir("resume");
  auto c = tiny(dir);
  cmd_gen_data(c);
  c.train.cluster_weights = true;
  c.train.cluster_k = 4;
  c.train.steps = 9;
  c.train.checkpoint = "full.ckpt";
  c.train.log = "full.csv";
  cmd_train(c);

  c.train.checkpoint = "part.ckpt";
  c.train.log = "part.csv";
  c.train.steps = 5;  // stops between log rows
  cmd_train(c);
  c.train.steps = 9;
  c.train.resume = true;
  const auto r = cmd_train(c);
  EXPECT_EQ(r.resumed_from, 5);
  EXPECT_EQ(bytes(dir / "part.ckpt"), bytes(dir / "full.ckpt"));
  EXPECT_EQ(text_of(dir / "part.csv"), text_of(dir / "full.csv"));
}

TEST(Train, ResumeWithDifferentConfigFails) {
  const auto dir = fresh_dir("resume_bad");
  auto c = tiny(dir);
  cmd_gen_data(c);
  cmd_train(c);
  c.train.resume = true;
  c.train.lr_start = 5e-3;
  EXPECT_THROW(cmd_train(c), ConfigError);
}

TEST(Train, MissingDataIsAnError) {
  const auto dir = fresh_dir("nodata");
  EXPECT_THROW(cmd_train(tiny(dir)), std::runtime_error);
}

// ---------------------------------------------------------------------------
// sample

TEST(Sample, ZeroStepsCopiesStartFrame) {
  const auto dir = fresh_dir("sample0");
  auto c = tiny(dir);
  const auto g = cmd_gen_data(c);
  cmd_train(c);
  c.sample.n_steps = 0;
  c.sample.start_frame = 7;
  const auto r = cmd_sample(c);
  const auto t = io::read_tct(r.out);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_TRUE(t.frames[0].bitwise_equal(g.dataset.trajectories[0].frames[7]));
  EXPECT_DOUBLE_EQ(t.frame_interval, 0.02);
}

TEST(Sample, FixedSeedIsByteIdenticalAndFlagsMatter) {
  const auto dir = fresh_dir("sample");
  auto c = tiny(dir);
  cmd_gen_data(c);
  cmd_train(c);
  const auto a = bytes(cmd_sample(c).out);
  EXPECT_EQ(bytes(cmd_sample(c).out), a);
  auto c_eps = c;
  c_eps.sample.eps = 0.7;
  EXPECT_NE(bytes(cmd_sample(c_eps).out), a);
  auto c_dt = c;
  c_dt.sample.steps = 6;
  EXPECT_NE(bytes(cmd_sample(c_dt).out), a);
  const auto t = io::read_tct(c.resolve(c.sample.out));
  EXPECT_EQ(t.size(), 6u);
}

TEST(Sample, SpecMismatchIsAnError) {
  const auto dir = fresh_dir("sample_spec");
  auto c = tiny(dir);
  cmd_gen_data(c);
  cmd_train(c);
  Trajectory other;
  other.spec = IrrepsSpec::parse("1x0e");
  other.n_nodes = 3;
  other.labels = {0, 1, 2};
  other.frames.emplace_back(other.spec, 3);
  io::write_tct((dir / "other.tct").string(), other);
  c.sample.start = "other.tct";
  EXPECT_THROW(cmd_sample(c), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// analyze

TEST(Analyze, SamplesEqualReferenceGiveZeroJs) {
  const auto dir = fresh_dir("analyze_same");
  auto c = tiny(dir);
  c.world.bd.steps = 40000;
  const auto g = cmd_gen_data(c);
  c.analysis.samples = {g.trajectory_files[0]};
  c.analysis.clusters = 10;
  c.analysis.msm_lag = 2;
  const auto r = cmd_analyze(c);
  for (const char* obs : {"TIC1", "TIC2", "RG"}) {
    const auto& row = r.row(obs);
    ASSERT_TRUE(row.available) << obs;
    EXPECT_EQ(row.js_raw[0], 0.0) << obs;
    EXPECT_LT(row.js[0], 5e-3) << obs;
  }
  for (const char* obs : {"RMSD", "GDT", "FNC"}) {
    EXPECT_FALSE(r.row(obs).available) << obs;
  }
  const auto table = text_of(dir / "report" / "js.txt");
  EXPECT_NE(table.find("n/a"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "report" / "free_energy_TIC1.csv"));
  EXPECT_NE(text_of(dir / "report" / "chemistry.txt").find("n/a"), std::string::npos);
}

TEST(Analyze, NativeStructureEnablesStructuralRows) {
  const auto dir = fresh_dir("analyze_native");
  auto c = tiny(dir);
  const auto g = cmd_gen_data(c);
  const auto& ref = g.dataset.trajectories[0];
  AnalysisSection opt = c.analysis;
  const auto r = analyze(ref, {ref}, {"same"}, ref.frames[0], opt);
  EXPECT_TRUE(r.row("RMSD").available);
  EXPECT_TRUE(r.row("GDT").available);
  EXPECT_EQ(r.row("RMSD").js_raw[0], 0.0);
  // Three nodes have no contacts at sequence separation 3.
  EXPECT_FALSE(r.row("FNC").available);
}

TEST(Analyze, IncompatibleNodeCountIsAnError) {
  const auto dir = fresh_dir("analyze_bad");
  auto c = tiny(dir);
  const auto g = cmd_gen_data(c);
  Trajectory two;
  two.n_nodes = 2;
  two.frames.assign(5, TensorCloud(IrrepsSpec{}, 2));
  EXPECT_THROW(analyze(g.dataset.trajectories[0], {two}, {"two"}, std::nullopt, c.analysis), std::invalid_argument);
}

TEST(Analyze, DivergedSampleIsChargedMaximalJs) {
  const auto dir = fresh_dir("analyze_div");
  auto c = tiny(dir);
  const auto g = cmd_gen_data(c);
  Trajectory one = g.dataset.trajectories[0];
  one.frames.resize(1);
  const auto r = analyze(g.dataset.trajectories[0], {one}, {"one"}, std::nullopt, c.analysis);
  EXPECT_EQ(r.row("TIC1").js[0], kDivergedJs);
}

// ---------------------------------------------------------------------------
// compare-transports and sweep

TEST(Compare, KindFilterAndReproducibility) {
  const auto dir = fresh_dir("compare");
  auto c = tiny(dir);
  cmd_gen_data(c);
  c.schedule.compare_sigma2_p = {1.0};
  const auto one = cmd_compare_transports(c, transport::Kind::one_sided);
  ASSERT_EQ(one.cells.size(), 1u);
  EXPECT_EQ(one.cells[0].kind, transport::Kind::one_sided);

  const auto all = cmd_compare_transports(c);
  EXPECT_EQ(all.cells.size(), 4u);
  const auto table = text_of(dir / "report" / "compare" / "compare.txt");
  const auto again = cmd_compare_transports(c);
  EXPECT_EQ(again.table(), all.table());
  EXPECT_EQ(text_of(dir / "report" / "compare" / "compare.txt"), table);
  // Every kind trained on the same data file.
  const auto h0 = io::read_checkpoint((dir / "report" / "compare" / "two_sided_s1.ckpt").string()).header;
  const auto h1 = io::read_checkpoint((dir / "report" / "compare" / "ddpm_s1.ckpt").string()).header;
  auto fingerprint = [](const std::string& h) { return h.substr(h.find("data.fingerprint")).substr(0, 40); };
  EXPECT_EQ(fingerprint(h0), fingerprint(h1));
}

TEST(Sweep, RunsTheWholeGrid) {
  const auto dir = fresh_dir("sweep");
  auto c = tiny(dir);
  cmd_gen_data(c);
  cmd_train(c);
  const auto r = cmd_sweep(c);
  ASSERT_EQ(r.cells.size(), 4u);
  for (const auto& cell : r.cells) {
    EXPECT_GE(cell.js_tic1, 0.0);
    EXPECT_LE(cell.js_tic1, kDivergedJs + 1e-12);
  }
  EXPECT_EQ(data_rows(dir / "report" / "sweep.csv"), 4);
  EXPECT_LE(r.best_tic1(), r.cells[0].js_tic1);
}
