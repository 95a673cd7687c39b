#pragma once

// The pipeline commands. Each is a function of (config, input files, seeds)
// and writes its outputs under paths taken from the config.

#include <optional>
#include <string>
#include <vector>

#include "tensorjump/analysis.hpp"
#include "tensorjump/equinet.hpp"
#include "tensorjump/io.hpp"
#include "tensorjump/transport.hpp"
#include "tensorjump_cli/config.hpp"

namespace tensorjump::cli {

// ---------------------------------------------------------------------------
// Trained models

/// Everything needed to sample: rebuilt from a checkpoint header.
struct Model {
  equinet::NetConfig net;
  transport::Schedule schedule;
  equinet::EquiNetParams params;
  /// Physical time between the two frames of a training pair.
  double lag_interval = 1.0;
};

/// Checkpoint header text: the model, schedule and training settings that a
/// resumed run must share, plus a fingerprint of the data.
std::string checkpoint_header(const equinet::NetConfig& net, const transport::Schedule& schedule,
                              const TrainSection& train, double lag_interval, std::uint64_t data_fingerprint);
Model load_model(const io::Checkpoint& checkpoint);
Model load_model(const std::string& path);

// ---------------------------------------------------------------------------
// Data

struct DataSet {
  std::vector<Trajectory> trajectories;
  std::vector<worlds::PairIndex> pairs;
  std::uint64_t fingerprint = 0;
};

struct GenDataResult {
  std::vector<std::string> trajectory_files;
  std::string pairs_file;
  worlds::Dataset dataset;  // as written (positions rounded to f32)
};

GenDataResult cmd_gen_data(const RunConfig& config);
/// Reads traj_NNN.tct and pairs.csv from a gen-data directory.
DataSet load_dataset(const std::string& dir);
std::string trajectory_file(const std::string& dir, std::size_t index);

// ---------------------------------------------------------------------------
// Training

struct TrainResult {
  std::string checkpoint;
  std::string log;
  long step = 0;
  double last_loss = 0.0;
  long resumed_from = -1;
};

TrainResult cmd_train(const RunConfig& config);

// ---------------------------------------------------------------------------
// Sampling

struct TimingSummary {
  std::size_t steps = 0;
  double mean = 0.0;
  double median = 0.0;
  double p95 = 0.0;
  std::string str() const;
};

struct SampleResult {
  std::string out;
  Trajectory trajectory;
  TimingSummary timing;
};

SampleResult cmd_sample(const RunConfig& config);
/// The rollout without writing it.
Trajectory sample_rollout(const RunConfig& config, const Model& model, const Trajectory& start, long n_steps,
                          const transport::SampleConfig& sc);
transport::SampleConfig sample_config(const RunConfig& config);

// ---------------------------------------------------------------------------
// Analysis

/// Features used for TICA: pairwise node distances, or raw coordinates for
/// single-node worlds.
analysis::Matrix features(const Trajectory& traj);

struct JsRow {
  std::string observable;
  bool available = true;
  std::string reason;              // why not, when unavailable
  std::vector<double> js;          // headline: MSM-reweighted when enabled
  std::vector<double> js_raw;      // unweighted sample density
};

struct FreeEnergyCurve {
  std::string observable;
  std::vector<double> centers;
  std::vector<double> reference;
  std::vector<std::vector<double>> samples;
};

struct AnalysisReport {
  std::vector<std::string> samples;
  std::vector<JsRow> rows;
  std::vector<FreeEnergyCurve> free_energy;
  std::string chemistry;  // text block, or a note when not applicable
  /// Fixed-width JS table.
  std::string table() const;
  const JsRow& row(const std::string& observable) const;
};

/// The analysis on in-memory trajectories. `native` enables RMSD/GDT/FNC.
AnalysisReport analyze(const Trajectory& reference, const std::vector<Trajectory>& samples,
                       const std::vector<std::string>& names, const std::optional<TensorCloud>& native,
                       const AnalysisSection& options);
/// Writes js.txt, free_energy_<OBS>.csv and chemistry.txt under analysis.out_dir.
AnalysisReport cmd_analyze(const RunConfig& config);

// ---------------------------------------------------------------------------
// Transport comparison and the (eps, dtau) sweep

struct CompareCell {
  transport::Kind kind;
  double sigma2_p = 1.0;
  std::string status;
  std::vector<JsRow> rows;
};

struct CompareReport {
  std::vector<CompareCell> cells;
  std::string table() const;
};

/// Trains, samples and analyzes every (kind, sigma2_p) in the grid with
/// shared data and seeds. `only` restricts the run to one kind.
CompareReport cmd_compare_transports(const RunConfig& config, std::optional<transport::Kind> only = {});

struct SweepCell {
  double eps = 0.0;
  int steps = 0;
  long frames = 0;
  std::string status;
  double js_tic1 = 0.0;
  double js_rg = 0.0;
};

struct SweepReport {
  std::vector<SweepCell> cells;
  std::string table() const;
  /// Smallest JS(TIC1) over the grid.
  double best_tic1() const;
};

/// JS charged to a rollout that diverged before producing enough frames.
inline constexpr double kDivergedJs = 0.6931471805599453;

SweepReport cmd_sweep(const RunConfig& config);

}  // namespace tensorjump::cli
