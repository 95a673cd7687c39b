#include "tensorjump_cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

namespace tensorjump::cli {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

double to_double(const std::string& v) {
  double x = 0.0;
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc() || p != end || !std::isfinite(x)) throw ConfigError("not a finite number: '" + v + "'");
  return x;
}

long to_long(const std::string& v) {
  long x = 0;
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc() || p != end) throw ConfigError("not an integer: '" + v + "'");
  return x;
}

int to_int(const std::string& v) {
  const long x = to_long(v);
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
    throw ConfigError("integer out of range: '" + v + "'");
  }
  return static_cast<int>(x);
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t x = 0;
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc() || p != end) throw ConfigError("not an unsigned integer: '" + v + "'");
  return x;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("not a boolean: '" + v + "'");
}

std::string num(double x) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, p);
}

template <class T, class F>
std::string join(const std::vector<T>& xs, F&& f, const char* sep = ", ") {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += sep;
    out += f(xs[i]);
  }
  return out;
}

std::vector<double> to_doubles(const std::string& v) {
  std::vector<double> out;
  for (const auto& s : split(v, ',')) out.push_back(to_double(s));
  return out;
}

transport::EpsProfile to_profile(const std::string& v) {
  if (v == "constant") return transport::EpsProfile::constant;
  if (v == "bridge") return transport::EpsProfile::bridge;
  throw ConfigError("unknown eps profile '" + v + "' (constant, bridge)");
}

std::string profile_name(transport::EpsProfile p) {
  return p == transport::EpsProfile::bridge ? "bridge" : "constant";
}

transport::Kind to_kind(const std::string& v) {
  try {
    return transport::parse_kind(v);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

struct Key {
  const char* name;  // section.key
  const char* doc;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define TJ_KEY(NAME, DOC, EXPR, TO, FROM)                                        \
  Key {                                                                         \
    NAME, DOC, [](const RunConfig& c) { return TO(c.EXPR); },                   \
        [](RunConfig& c, const std::string& v) { c.EXPR = FROM(v); }            \
  }

std::string str(const std::string& s) { return s; }
std::string bool_str(bool b) { return b ? "true" : "false"; }
template <class T>
std::string int_str(T x) {
  return std::to_string(x);
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      // world
      {"world.potential", "double_well, harmonic, harmonic_chain, gaussian_mixture_3d or double_well_trimer",
       [](const RunConfig& c) { return worlds::to_string(c.world.potential.kind); },
       [](RunConfig& c, const std::string& v) {
         try {
           c.world.potential.kind = worlds::parse_potential(v);
         } catch (const std::exception& e) {
           throw ConfigError(e.what());
         }
       }},
      TJ_KEY("world.dim", "coordinates of double_well / harmonic", world.potential.dim, int_str, to_int),
      TJ_KEY("world.particles", "particles of harmonic_chain", world.potential.particles, int_str, to_int),
      TJ_KEY("world.a", "double-well barrier height", world.potential.a, num, to_double),
      TJ_KEY("world.c", "double-well tilt", world.potential.c, num, to_double),
      TJ_KEY("world.k", "spring / confinement constant", world.potential.k, num, to_double),
      TJ_KEY("world.r0", "chain rest length; trimer double-well centre", world.potential.r0, num, to_double),
      TJ_KEY("world.s", "trimer double-well half separation", world.potential.s, num, to_double),
      TJ_KEY("world.r12", "trimer spring rest length d12", world.potential.r12, num, to_double),
      TJ_KEY("world.r02", "trimer spring rest length d02", world.potential.r02, num, to_double),
      TJ_KEY("world.mixture_kT", "gaussian mixture temperature", world.potential.kT, num, to_double),
      {"world.centers", "gaussian mixture centres 'x y z; x y z; ...'",
       [](const RunConfig& c) {
         return join(c.world.potential.centers,
                     [](const Vec3& v) { return num(v.x()) + " " + num(v.y()) + " " + num(v.z()); }, "; ");
       },
       [](RunConfig& c, const std::string& v) {
         c.world.potential.centers.clear();
         for (const auto& item : split(v, ';')) {
           std::stringstream in(item);
           std::string a, b, d, extra;
           if (!(in >> a >> b >> d) || (in >> extra)) throw ConfigError("centre needs three numbers: '" + item + "'");
           c.world.potential.centers.emplace_back(to_double(a), to_double(b), to_double(d));
         }
       }},
      {"world.weights", "gaussian mixture weights",
       [](const RunConfig& c) { return join(c.world.potential.weights, num); },
       [](RunConfig& c, const std::string& v) { c.world.potential.weights = to_doubles(v); }},
      {"world.widths", "gaussian mixture widths",
       [](const RunConfig& c) { return join(c.world.potential.widths, num); },
       [](RunConfig& c, const std::string& v) { c.world.potential.widths = to_doubles(v); }},
      {"world.friction", "diagonal friction, one value or one per coordinate",
       [](const RunConfig& c) { return join(c.world.bd.friction, num); },
       [](RunConfig& c, const std::string& v) { c.world.bd.friction = to_doubles(v); }},
      TJ_KEY("world.kT", "Brownian dynamics temperature", world.bd.kT, num, to_double),
      TJ_KEY("world.dt", "integration time step", world.bd.dt, num, to_double),
      TJ_KEY("world.steps", "steps per trajectory", world.bd.steps, int_str, to_long),
      TJ_KEY("world.stride", "steps between kept frames", world.bd.stride, int_str, to_long),
      TJ_KEY("world.burn_in", "steps discarded before recording", world.dataset.burn_in, int_str, to_long),
      TJ_KEY("world.trajectories", "independent trajectories", world.dataset.n_trajectories, int_str, to_int),
      TJ_KEY("world.pair_lag", "training pair lag in kept frames", world.dataset.pair_lag, int_str, to_int),
      TJ_KEY("world.recenter", "subtract the centroid from every frame", world.dataset.recenter, bool_str, to_bool),
      TJ_KEY("world.label", "node label for every node; -1 labels node i with i", world.dataset.label, int_str,
             to_int),
      TJ_KEY("world.out_dir", "where gen-data writes traj_NNN.tct and pairs.csv", world.out_dir, str, str),
      TJ_KEY("world.seed", "simulation seed", world.seed, int_str, to_u64),
      // model
      TJ_KEY("model.H", "channels per degree", model.block.H, int_str, to_int),
      TJ_KEY("model.lmax", "largest hidden degree", model.block.lmax, int_str, to_int),
      TJ_KEY("model.k", "nearest neighbours per node", model.block.k, int_str, to_int),
      TJ_KEY("model.L_cond", "conditioner blocks", model.block.L_cond, int_str, to_int),
      TJ_KEY("model.L_header", "header blocks", model.block.L_header, int_str, to_int),
      TJ_KEY("model.n_rbf", "radial basis functions", model.block.n_rbf, int_str, to_int),
      TJ_KEY("model.cutoff", "radial cutoff", model.block.cutoff, num, to_double),
      TJ_KEY("model.tau_dim", "latent-time embedding size", model.tau_dim, int_str, to_int),
      TJ_KEY("model.vocab", "label vocabulary; 0 infers it from the data", model.vocab, int_str, to_int),
      TJ_KEY("model.seed", "initialization seed", model.seed, int_str, to_u64),
      // schedule
      {"schedule.kind", "two_sided, one_sided, flow_matching or ddpm",
       [](const RunConfig& c) { return transport::to_string(c.schedule.kind); },
       [](RunConfig& c, const std::string& v) { c.schedule.kind = to_kind(v); }},
      TJ_KEY("schedule.sigma2_p", "latent noise variance on positions", schedule.noise.sigma2_p, num, to_double),
      TJ_KEY("schedule.sigma2_v", "latent noise variance on features", schedule.noise.sigma2_v, num, to_double),
      TJ_KEY("schedule.precondition", "normalize the header displacement input", schedule.precondition, bool_str,
             to_bool),
      {"schedule.compare_kinds", "kinds trained by compare-transports",
       [](const RunConfig& c) {
         return join(c.schedule.compare_kinds, [](transport::Kind k) { return transport::to_string(k); });
       },
       [](RunConfig& c, const std::string& v) {
         c.schedule.compare_kinds.clear();
         for (const auto& s : split(v, ',')) c.schedule.compare_kinds.push_back(to_kind(s));
       }},
      {"schedule.compare_sigma2_p", "position noise variances tried by compare-transports",
       [](const RunConfig& c) { return join(c.schedule.compare_sigma2_p, num); },
       [](RunConfig& c, const std::string& v) { c.schedule.compare_sigma2_p = to_doubles(v); }},
      // train
      TJ_KEY("train.data_dir", "training data; empty uses world.out_dir", train.data_dir, str, str),
      TJ_KEY("train.checkpoint", "checkpoint path", train.checkpoint, str, str),
      TJ_KEY("train.log", "loss log CSV path", train.log, str, str),
      TJ_KEY("train.steps", "optimizer steps", train.steps, int_str, to_long),
      TJ_KEY("train.batch_size", "pairs per step", train.batch_size, int_str, to_int),
      TJ_KEY("train.lr_start", "initial learning rate", train.lr_start, num, to_double),
      TJ_KEY("train.lr_end", "final learning rate", train.lr_end, num, to_double),
      TJ_KEY("train.lr_steps", "linear decay horizon; 0 uses train.steps", train.lr_steps, int_str, to_long),
      TJ_KEY("train.checkpoint_every", "steps between checkpoints and log rows", train.checkpoint_every, int_str,
             to_long),
      TJ_KEY("train.resume", "continue from the checkpoint if it exists", train.resume, bool_str, to_bool),
      TJ_KEY("train.cluster_weights", "draw pairs cluster-uniformly in TIC space", train.cluster_weights, bool_str,
             to_bool),
      TJ_KEY("train.cluster_k", "clusters for pair weighting", train.cluster_k, int_str, to_int),
      TJ_KEY("train.cluster_tics", "TIC dimensions used for pair weighting", train.cluster_tics, int_str, to_int),
      TJ_KEY("train.tica_lag", "TICA lag for pair weighting (frames)", train.tica_lag, int_str, to_int),
      TJ_KEY("train.seed", "batch and latent-noise seed", train.seed, int_str, to_u64),
      // sample
      TJ_KEY("sample.checkpoint", "checkpoint to sample; empty uses train.checkpoint", sample.checkpoint, str, str),
      TJ_KEY("sample.start", "trajectory holding the start frame; empty uses the training data", sample.start, str,
             str),
      TJ_KEY("sample.start_frame", "index of the start frame", sample.start_frame, int_str, to_long),
      TJ_KEY("sample.n_steps", "generated frames per rollout", sample.n_steps, int_str, to_long),
      TJ_KEY("sample.steps", "latent integration steps (1/dtau)", sample.steps, int_str, to_int),
      TJ_KEY("sample.eps", "diffusion coefficient eps", sample.eps, num, to_double),
      {"sample.profile", "eps(tau): constant or bridge (4 tau (1 - tau) eps)",
       [](const RunConfig& c) { return profile_name(c.sample.profile); },
       [](RunConfig& c, const std::string& v) { c.sample.profile = to_profile(v); }},
      TJ_KEY("sample.gamma_floor", "gamma clamp in units of dtau", sample.gamma_floor, num, to_double),
      TJ_KEY("sample.literal_kick", "omit sqrt(dtau) on the stochastic kick", sample.literal_kick, bool_str, to_bool),
      TJ_KEY("sample.out", "rollout output path", sample.out, str, str),
      {"sample.sweep_eps", "eps values of the sweep grid",
       [](const RunConfig& c) { return join(c.sample.sweep_eps, num); },
       [](RunConfig& c, const std::string& v) { c.sample.sweep_eps = to_doubles(v); }},
      {"sample.sweep_steps", "latent step counts of the sweep grid",
       [](const RunConfig& c) { return join(c.sample.sweep_steps, [](int x) { return std::to_string(x); }); },
       [](RunConfig& c, const std::string& v) {
         c.sample.sweep_steps.clear();
         for (const auto& s : split(v, ',')) c.sample.sweep_steps.push_back(to_int(s));
       }},
      TJ_KEY("sample.sweep_n_steps", "generated frames per sweep cell", sample.sweep_n_steps, int_str, to_long),
      TJ_KEY("sample.seed", "sampling seed", sample.seed, int_str, to_u64),
      // analysis
      TJ_KEY("analysis.reference", "reference trajectory; empty uses the training data", analysis.reference, str,
             str),
      {"analysis.samples", "sample trajectories, comma separated; empty uses sample.out",
       [](const RunConfig& c) { return join(c.analysis.samples, str); },
       [](RunConfig& c, const std::string& v) { c.analysis.samples = split(v, ','); }},
      TJ_KEY("analysis.native", "optional native structure (first frame used)", analysis.native, str, str),
      TJ_KEY("analysis.tica_lag", "TICA lag in frames", analysis.tica_lag, int_str, to_int),
      TJ_KEY("analysis.tica_dims", "TIC dimensions clustered for the MSM", analysis.tica_dims, int_str, to_int),
      TJ_KEY("analysis.clusters", "k-means clusters (capped at frames / 10)", analysis.clusters, int_str, to_int),
      TJ_KEY("analysis.msm_lag", "MSM lag in frames", analysis.msm_lag, int_str, to_int),
      TJ_KEY("analysis.bins", "histogram bins per observable", analysis.bins, int_str, to_int),
      TJ_KEY("analysis.kT", "free-energy temperature", analysis.kT, num, to_double),
      TJ_KEY("analysis.reweight", "MSM-reweight sample densities", analysis.reweight, bool_str, to_bool),
      TJ_KEY("analysis.out_dir", "report directory", analysis.out_dir, str, str),
      TJ_KEY("analysis.seed", "clustering seed", analysis.seed, int_str, to_u64),
  };
  return table;
}

#undef TJ_KEY

const Key& find_key(const std::string& name) {
  for (const auto& k : keys()) {
    if (name == k.name) return k;
  }
  throw ConfigError("unknown key '" + name + "'");
}

const char* const kSections[] = {"world", "model", "schedule", "train", "sample", "analysis"};

}  // namespace

std::vector<std::pair<std::string, std::string>> documented_keys() {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : keys()) out.emplace_back(k.name, k.doc);
  return out;
}

void RunConfig::set(const std::string& dotted_key, const std::string& value) {
  const auto& key = find_key(dotted_key);
  try {
    key.set(*this, value);
  } catch (const ConfigError& e) {
    throw ConfigError(dotted_key + ": " + e.what());
  }
}

void RunConfig::set_seed(std::uint64_t seed) {
  world.seed = seed;
  model.seed = seed + 1;
  train.seed = seed + 2;
  sample.seed = seed + 3;
  analysis.seed = seed + 4;
}

RunConfig RunConfig::parse(const std::string& text, const std::filesystem::path& base_dir) {
  RunConfig c;
  c.base_dir = base_dir;
  std::stringstream in(text);
  std::string line, section;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = "line " + std::to_string(number) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (std::find(std::begin(kSections), std::end(kSections), section) == std::end(kSections)) {
        throw ConfigError(where + "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.find('.') == std::string::npos) {
      if (section.empty()) throw ConfigError(where + "key '" + key + "' outside a section");
      key = section + "." + key;
    }
    try {
      c.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str(), path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string RunConfig::resolve(const std::string& path) const {
  if (path.empty()) return path;
  const std::filesystem::path p(path);
  return p.is_absolute() ? p.string() : (base_dir / p).lexically_normal().string();
}

std::string RunConfig::data_dir() const { return resolve(train.data_dir.empty() ? world.out_dir : train.data_dir); }

std::string RunConfig::checkpoint_path() const {
  return resolve(sample.checkpoint.empty() ? train.checkpoint : sample.checkpoint);
}

std::string RunConfig::dump() const {
  std::string out, section;
  for (const auto& k : keys()) {
    const std::string name = k.name;
    const auto dot = name.find('.');
    if (name.substr(0, dot) != section) {
      section = name.substr(0, dot);
      out += (out.empty() ? "[" : "\n[") + section + "]\n";
    }
    out += name.substr(dot + 1) + " = " + k.get(*this) + "\n";
  }
  return out;
}

void RunConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  try {
    world.potential.validate();
    world.bd.validate(world.potential.size());
    model.block.validate();
    schedule.noise.validate();
    for (double v : schedule.compare_sigma2_p) need(v > 0.0, "schedule.compare_sigma2_p must be > 0");
    transport::TrainConfig tc;
    tc.batch_size = train.batch_size;
    tc.steps = train.steps;
    tc.lr_start = train.lr_start;
    tc.lr_end = train.lr_end;
    tc.lr_steps = train.lr_steps > 0 ? train.lr_steps : std::max(1L, train.steps);
    tc.validate();
    transport::SampleConfig sc;
    sc.steps = sample.steps;
    sc.eps = sample.eps;
    sc.gamma_floor = sample.gamma_floor;
    sc.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  need(world.dataset.n_trajectories >= 1, "world.trajectories must be >= 1");
  need(world.dataset.pair_lag >= 1, "world.pair_lag must be >= 1");
  need(world.dataset.burn_in >= 0, "world.burn_in must be >= 0");
  need(model.tau_dim >= 2 && model.tau_dim % 2 == 0, "model.tau_dim must be even and >= 2");
  need(model.vocab >= 0, "model.vocab must be >= 0");
  need(train.steps >= 0, "train.steps must be >= 0");
  need(train.lr_steps >= 0, "train.lr_steps must be >= 0");
  need(train.checkpoint_every >= 1, "train.checkpoint_every must be >= 1");
  need(train.cluster_k >= 1 && train.cluster_tics >= 1 && train.tica_lag >= 1, "train cluster settings must be >= 1");
  need(sample.n_steps >= 0 && sample.start_frame >= 0, "sample.n_steps and sample.start_frame must be >= 0");
  need(!sample.sweep_eps.empty() && !sample.sweep_steps.empty(), "sweep grid must not be empty");
  for (double e : sample.sweep_eps) need(e >= 0.0, "sample.sweep_eps must be >= 0");
  for (int s : sample.sweep_steps) need(s >= 1, "sample.sweep_steps must be >= 1");
  need(sample.sweep_n_steps >= 1, "sample.sweep_n_steps must be >= 1");
  need(analysis.tica_lag >= 1 && analysis.tica_dims >= 1 && analysis.clusters >= 1 && analysis.msm_lag >= 1,
       "analysis lags, dims and clusters must be >= 1");
  need(analysis.bins >= 2, "analysis.bins must be >= 2");
  need(analysis.kT > 0.0, "analysis.kT must be > 0");
  need(threads >= 1, "threads must be >= 1");
}

}  // namespace tensorjump::cli
