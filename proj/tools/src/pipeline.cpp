#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tensorjump/log.hpp"
#include "tensorjump_cli/commands.hpp"

namespace tensorjump::cli {

namespace fs = std::filesystem;

namespace {

std::vector<int> model_labels(const Trajectory& traj) {
  std::vector<int> labels(traj.n_nodes, 0);
  for (std::size_t i = 0; i < traj.labels.size() && i < labels.size(); ++i) labels[i] = std::max(0, traj.labels[i]);
  return labels;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string format_row(long step, double loss, double lr, double wall) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%ld,%.9g,%.9g,%.3f\n", step, loss, lr, wall);
  return buf;
}

// Keeps the header and the rows at or before `step`.
std::string truncated_log(const std::string& path, long step) {
  std::ifstream in(path);
  std::string out, line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      out += line + "\n";
      header = false;
      continue;
    }
    if (line.empty()) continue;
    if (std::stol(line.substr(0, line.find(','))) <= step) out += line + "\n";
  }
  return out.empty() ? "step,loss,lr,wall_time\n" : out;
}

void write_text(const std::string& path, const std::string& text) {
  io::write_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace

std::string trajectory_file(const std::string& dir, std::size_t index) {
  char name[32];
  std::snprintf(name, sizeof(name), "traj_%03zu.tct", index);
  return (fs::path(dir) / name).string();
}

// ---------------------------------------------------------------------------
// gen-data

GenDataResult cmd_gen_data(const RunConfig& config) {
  config.validate();
  GenDataResult out;
  out.dataset = worlds::generate_dataset(config.world.potential, config.world.bd, config.world.dataset,
                                         config.world.seed);
  if (config.world.bd.steps == 0) {
    // Header-only files: nothing was simulated.
    for (auto& t : out.dataset.trajectories) t.frames.clear();
    out.dataset.pairs.clear();
  }
  const auto dir = config.resolve(config.world.out_dir);
  for (std::size_t t = 0; t < out.dataset.trajectories.size(); ++t) {
    auto& traj = out.dataset.trajectories[t];
    io::quantize_f32(traj);
    out.trajectory_files.push_back(trajectory_file(dir, t));
    io::write_tct(out.trajectory_files.back(), traj);
  }
  out.pairs_file = (fs::path(dir) / "pairs.csv").string();
  io::write_pairs(out.pairs_file, out.dataset.pairs);
  return out;
}

DataSet load_dataset(const std::string& dir) {
  DataSet data;
  const auto pairs_file = (fs::path(dir) / "pairs.csv").string();
  if (!fs::exists(pairs_file)) throw std::runtime_error("no training data: missing " + pairs_file);
  data.pairs = io::read_pairs(pairs_file);
  const auto pair_bytes = io::read_bytes(pairs_file);
  data.fingerprint = io::fnv1a64(pair_bytes);
  for (std::size_t t = 0; fs::exists(trajectory_file(dir, t)); ++t) {
    const auto bytes = io::read_bytes(trajectory_file(dir, t));
    // Fold in each file's checksum (its last 8 bytes).
    data.fingerprint ^= io::fnv1a64(std::span(bytes).last(std::min<std::size_t>(8, bytes.size()))) + t;
    data.trajectories.push_back(io::decode_tct(bytes));
  }
  if (data.trajectories.empty()) throw std::runtime_error("no trajectories in " + dir);
  for (const auto& p : data.pairs) {
    if (p.trajectory >= data.trajectories.size() || p.frame + p.lag >= data.trajectories[p.trajectory].size()) {
      throw std::runtime_error(pairs_file + ": pair (" + std::to_string(p.trajectory) + ", " +
                               std::to_string(p.frame) + ", " + std::to_string(p.lag) + ") is out of range");
    }
  }
  return data;
}

// ---------------------------------------------------------------------------
// train

TrainResult cmd_train(const RunConfig& config) {
  config.validate();
  const auto data = load_dataset(config.data_dir());
  if (data.pairs.empty()) throw std::runtime_error("train: the pair index is empty");
  const auto& first = data.trajectories.front();

  std::vector<std::vector<int>> labels;
  int max_label = 0;
  for (const auto& t : data.trajectories) {
    if (!(t.spec == first.spec) || t.n_nodes != first.n_nodes) {
      throw std::runtime_error("train: trajectories disagree on spec or node count");
    }
    labels.push_back(model_labels(t));
    for (int l : labels.back()) max_label = std::max(max_label, l);
  }

  equinet::NetConfig net;
  net.block = config.model.block;
  net.state_spec = first.spec;
  net.tau_dim = config.model.tau_dim;
  net.vocab = config.model.vocab > 0 ? config.model.vocab : max_label + 1;
  if (max_label >= net.vocab) throw ConfigError("model.vocab " + std::to_string(net.vocab) + " is too small");

  std::vector<transport::Pair> pairs;
  pairs.reserve(data.pairs.size());
  for (const auto& p : data.pairs) {
    const auto& t = data.trajectories[p.trajectory];
    pairs.push_back({&labels[p.trajectory], &t.frames[p.frame], &t.frames[p.frame + p.lag]});
  }

  auto schedule = transport::make_schedule(config.schedule.kind, config.schedule.noise);
  if (config.schedule.precondition) schedule.set_data_scales(transport::estimate_data_scales(pairs));
  const double lag_interval = first.frame_interval * data.pairs.front().lag;
  const auto header = checkpoint_header(net, schedule, config.train, lag_interval, data.fingerprint);

  transport::TrainConfig tc;
  tc.batch_size = config.train.batch_size;
  tc.steps = config.train.steps;
  tc.lr_start = config.train.lr_start;
  tc.lr_end = config.train.lr_end;
  tc.lr_steps = config.train.lr_steps > 0 ? config.train.lr_steps : std::max(1L, config.train.steps);
  tc.seed = config.train.seed;

  TrainResult result;
  result.checkpoint = config.resolve(config.train.checkpoint);
  result.log = config.resolve(config.train.log);

  auto params = equinet::init_params(net, config.model.seed);
  transport::AdamState adam;
  std::mt19937_64 rng(config.train.seed);
  long step = 0;
  double acc = 0.0;
  long acc_count = 0;
  std::string log_text = "step,loss,lr,wall_time\n";

  if (config.train.resume && fs::exists(result.checkpoint)) {
    const auto ck = io::read_checkpoint(result.checkpoint);
    if (ck.header_hash() != io::fnv1a64(header)) {
      throw ConfigError("resume: configuration hash differs from checkpoint " + result.checkpoint);
    }
    if (!ck.resume) throw ConfigError("resume: checkpoint " + result.checkpoint + " has no optimizer state");
    if (static_cast<long>(ck.step) > tc.steps) {
      throw ConfigError("resume: checkpoint is at step " + std::to_string(ck.step) + ", past train.steps");
    }
    params.flat = ck.resume->params;
    adam.m = ck.resume->adam_m;
    adam.v = ck.resume->adam_v;
    adam.step = static_cast<long>(ck.resume->adam_step);
    std::istringstream(ck.resume->rng_state) >> rng;
    {
      // "%a %ld": hex float keeps the partial loss sum exact.
      char* end = nullptr;
      acc = std::strtod(ck.resume->caller_state.c_str(), &end);
      acc_count = std::strtol(end, nullptr, 10);
    }
    step = static_cast<long>(ck.step);
    result.resumed_from = step;
    log_text = truncated_log(result.log, step);
    log::info("train: resuming at step " + std::to_string(step));
  }

  // Pair sampling: uniform, or cluster-uniform in TIC space.
  std::function<std::size_t()> draw;
  std::uniform_int_distribution<std::size_t> uniform(0, pairs.size() - 1);
  std::discrete_distribution<std::size_t> weighted;
  if (config.train.cluster_weights) {
    std::vector<analysis::Matrix> feats;
    std::vector<std::size_t> offsets{0};
    for (const auto& t : data.trajectories) {
      feats.push_back(features(t));
      offsets.push_back(offsets.back() + t.size());
    }
    const auto tica = analysis::tica_fit(feats, config.train.tica_lag);
    const int dims = std::min(config.train.cluster_tics, tica.dim());
    analysis::Matrix points(static_cast<Eigen::Index>(offsets.back()), dims);
    for (std::size_t t = 0; t < feats.size(); ++t) {
      points.middleRows(static_cast<Eigen::Index>(offsets[t]), feats[t].rows()) =
          analysis::tica_project(tica, feats[t], dims);
    }
    const int k = std::max(1, std::min<int>(config.train.cluster_k, static_cast<int>(points.rows())));
    const auto frame_w = analysis::cluster_weights_for_training(points, k, config.train.seed);
    std::vector<double> w;
    w.reserve(pairs.size());
    for (const auto& p : data.pairs) w.push_back(frame_w[offsets[p.trajectory] + p.frame]);
    weighted = std::discrete_distribution<std::size_t>(w.begin(), w.end());
    draw = [&] { return weighted(rng); };
  } else {
    draw = [&] { return uniform(rng); };
  }

  auto save = [&](long at) {
    io::Checkpoint ck;
    ck.header = header;
    ck.step = static_cast<std::uint64_t>(at);
    ck.params = params.flat;
    io::ResumeState rs;
    rs.params = params.flat;
    rs.adam_m = adam.m.empty() ? std::vector<double>(params.flat.size(), 0.0) : adam.m;
    rs.adam_v = adam.v.empty() ? std::vector<double>(params.flat.size(), 0.0) : adam.v;
    rs.adam_step = static_cast<std::uint64_t>(adam.step);
    std::ostringstream r;
    r << rng;
    rs.rng_state = r.str();
    char acc_text[64];
    std::snprintf(acc_text, sizeof(acc_text), "%a %ld", acc, acc_count);
    rs.caller_state = acc_text;
    ck.resume = std::move(rs);
    io::write_checkpoint(result.checkpoint, ck);
    write_text(result.log, log_text);
  };

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<transport::Pair> batch(static_cast<std::size_t>(tc.batch_size));
  while (step < tc.steps) {
    for (auto& b : batch) b = pairs[draw()];
    const auto r = transport::train_step(params, batch, schedule, tc, adam, rng);
    ++step;
    acc += r.loss;
    ++acc_count;
    result.last_loss = r.loss;
    if (step % config.train.checkpoint_every == 0) {
      log_text += format_row(step, acc / static_cast<double>(acc_count), r.lr,
                             config.deterministic ? 0.0 : seconds_since(t0));
      acc = 0.0;
      acc_count = 0;
      save(step);
    }
  }
  if (step == 0 || step % config.train.checkpoint_every != 0) save(step);
  result.step = step;
  return result;
}

// ---------------------------------------------------------------------------
// sample

transport::SampleConfig sample_config(const RunConfig& config) {
  transport::SampleConfig sc;
  sc.steps = config.sample.steps;
  sc.eps = config.sample.eps;
  sc.profile = config.sample.profile;
  sc.gamma_floor = config.sample.gamma_floor;
  sc.literal_kick = config.sample.literal_kick;
  sc.validate();
  return sc;
}

std::string TimingSummary::str() const {
  char buf[200];
  std::snprintf(buf, sizeof(buf), "%zu steps, mean %.3f ms, median %.3f ms, p95 %.3f ms per step", steps,
                mean * 1e3, median * 1e3, p95 * 1e3);
  return buf;
}

Trajectory sample_rollout(const RunConfig& config, const Model& model, const Trajectory& start, long n_steps,
                          const transport::SampleConfig& sc) {
  if (!(start.spec == model.net.state_spec)) {
    throw std::invalid_argument("sample: start frame spec '" + start.spec.str() + "' does not match the model's '" +
                                model.net.state_spec.str() + "'");
  }
  if (config.sample.start_frame >= static_cast<long>(start.size())) {
    throw std::invalid_argument("sample: start_frame " + std::to_string(config.sample.start_frame) +
                                " is past the end of a " + std::to_string(start.size()) + "-frame trajectory");
  }
  const auto labels = model_labels(start);
  for (int l : labels) {
    if (l >= model.net.vocab) throw std::invalid_argument("sample: label " + std::to_string(l) + " outside vocab");
  }
  std::mt19937_64 rng(config.sample.seed);
  auto traj = transport::rollout(labels, start.frames[static_cast<std::size_t>(config.sample.start_frame)], n_steps,
                                 model.params, model.schedule, sc, rng);
  traj.labels = start.labels;
  traj.mask = start.mask;
  traj.frame_interval = model.lag_interval;
  if (traj.status != "ok") log::warn("sample: " + traj.status);
  return traj;
}

SampleResult cmd_sample(const RunConfig& config) {
  config.validate();
  const auto model = load_model(config.checkpoint_path());
  const auto start_path =
      config.sample.start.empty() ? trajectory_file(config.data_dir(), 0) : config.resolve(config.sample.start);
  const auto start = io::read_tct(start_path);
  SampleResult out;
  out.trajectory = sample_rollout(config, model, start, config.sample.n_steps, sample_config(config));
  io::quantize_f32(out.trajectory);
  out.out = config.resolve(config.sample.out);
  io::write_tct(out.out, out.trajectory);

  auto secs = out.trajectory.step_seconds;
  out.timing.steps = secs.size();
  if (!secs.empty()) {
    double sum = 0.0;
    for (double s : secs) sum += s;
    out.timing.mean = sum / static_cast<double>(secs.size());
    std::sort(secs.begin(), secs.end());
    out.timing.median = secs[secs.size() / 2];
    out.timing.p95 = secs[std::min(secs.size() - 1, secs.size() * 95 / 100)];
  }
  return out;
}

}  // namespace tensorjump::cli
