#pragma once

// Run configuration: one flat key = value document split into [world],
// [model], [schedule], [train], [sample] and [analysis] sections. Every key
// has a default; unknown keys are errors. Relative paths resolve against the
// directory of the config file.

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "tensorjump/equinet.hpp"
#include "tensorjump/transport.hpp"
#include "tensorjump/worlds.hpp"

namespace tensorjump::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct WorldSection {
  worlds::Potential potential = worlds::default_trimer();
  worlds::BdConfig bd{.friction = {1.0}, .kT = 1.0, .dt = 1e-3, .steps = 2'000'000, .stride = 20};
  worlds::DatasetOptions dataset{.n_trajectories = 1, .pair_lag = 1, .recenter = true, .label = -1, .burn_in = 10'000};
  std::string out_dir = "data";
  std::uint64_t seed = 1;
};

struct ModelSection {
  equinet::BlockConfig block{.H = 8, .lmax = 1, .k = 2, .L_cond = 2, .L_header = 2, .n_rbf = 8, .cutoff = 12.0};
  int tau_dim = 16;
  int vocab = 0;  // 0: one past the largest label in the data
  std::uint64_t seed = 3;
};

struct ScheduleSection {
  transport::Kind kind = transport::Kind::two_sided;
  NoiseScales noise{.sigma2_v = 1.0, .sigma2_p = 1.0};
  /// Normalize the header displacement by its RMS under the interpolant.
  bool precondition = true;
  /// compare-transports grid.
  std::vector<transport::Kind> compare_kinds{transport::Kind::two_sided, transport::Kind::one_sided,
                                             transport::Kind::ddpm, transport::Kind::flow_matching};
  std::vector<double> compare_sigma2_p{1.0, 3.0, 5.0};
};

struct TrainSection {
  std::string data_dir;  // empty: world.out_dir
  std::string checkpoint = "model.ckpt";
  std::string log = "train_log.csv";
  long steps = 20'000;
  int batch_size = 8;
  double lr_start = 1e-2;
  double lr_end = 1e-3;
  long lr_steps = 0;  // 0: decay over `steps`
  long checkpoint_every = 1000;
  bool resume = false;
  bool cluster_weights = false;
  int cluster_k = 100;
  int cluster_tics = 4;
  int tica_lag = 1;
  std::uint64_t seed = 4;
};

struct SampleSection {
  std::string checkpoint;  // empty: train.checkpoint
  std::string start;       // empty: first trajectory of the training data
  long start_frame = 0;
  long n_steps = 100'000;
  int steps = 20;  // latent integration steps, 1/dtau
  double eps = 0.3;
  transport::EpsProfile profile = transport::EpsProfile::bridge;
  double gamma_floor = 0.5;
  bool literal_kick = false;
  std::string out = "samples.tct";
  /// sweep grid
  std::vector<double> sweep_eps{0.1, 0.3, 0.5, 1.0, 2.0, 3.0, 10.0};
  std::vector<int> sweep_steps{30, 50, 75, 100, 150, 200, 300};
  long sweep_n_steps = 2000;
  std::uint64_t seed = 5;
};

struct AnalysisSection {
  std::string reference;  // empty: the training data
  std::vector<std::string> samples;  // empty: sample.out
  std::string native;  // optional structure; RMSD/GDT/FNC are n/a without it
  int tica_lag = 1;
  int tica_dims = 2;
  int clusters = 100;
  int msm_lag = 10;
  int bins = 64;
  double kT = 1.0;
  bool reweight = true;
  std::string out_dir = "report";
  std::uint64_t seed = 6;
};

struct RunConfig {
  WorldSection world;
  ModelSection model;
  ScheduleSection schedule;
  TrainSection train;
  SampleSection sample;
  AnalysisSection analysis;
  /// Directory that relative paths are resolved against.
  std::filesystem::path base_dir = ".";
  bool deterministic = false;
  int threads = 1;

  /// Parses the document; `base_dir` is where relative paths point.
  static RunConfig parse(const std::string& text, const std::filesystem::path& base_dir = ".");
  static RunConfig load(const std::filesystem::path& path);

  /// Sets "section.key" to `value` with the same validation as the file.
  void set(const std::string& dotted_key, const std::string& value);
  /// Applies --seed: every section seed derives from it.
  void set_seed(std::uint64_t seed);

  std::string resolve(const std::string& path) const;
  std::string data_dir() const;
  std::string checkpoint_path() const;

  /// The full document with every key, in a form parse() accepts.
  std::string dump() const;
  void validate() const;
};

/// Every key as "section.key", with its one-line description.
std::vector<std::pair<std::string, std::string>> documented_keys();

}  // namespace tensorjump::cli
