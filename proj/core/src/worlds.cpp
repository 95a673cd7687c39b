#include "tensorjump/worlds.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <numbers>
#include <stdexcept>

namespace tensorjump::worlds {

PotentialKind parse_potential(const std::string& name) {
  if (name == "double_well") return PotentialKind::double_well;
  if (name == "harmonic") return PotentialKind::harmonic;
  if (name == "harmonic_chain") return PotentialKind::harmonic_chain;
  if (name == "gaussian_mixture_3d") return PotentialKind::gaussian_mixture_3d;
  if (name == "double_well_trimer") return PotentialKind::double_well_trimer;
  throw std::invalid_argument("unknown potential '" + name + "'");
}

std::string to_string(PotentialKind kind) {
  switch (kind) {
    case PotentialKind::double_well: return "double_well";
    case PotentialKind::harmonic: return "harmonic";
    case PotentialKind::harmonic_chain: return "harmonic_chain";
    case PotentialKind::gaussian_mixture_3d: return "gaussian_mixture_3d";
    case PotentialKind::double_well_trimer: return "double_well_trimer";
  }
  return "?";
}

std::size_t Potential::size() const {
  switch (kind) {
    case PotentialKind::double_well:
    case PotentialKind::harmonic: return static_cast<std::size_t>(dim);
    case PotentialKind::harmonic_chain: return 3 * static_cast<std::size_t>(particles);
    case PotentialKind::gaussian_mixture_3d: return 3;
    case PotentialKind::double_well_trimer: return 9;
  }
  return 0;
}

std::size_t Potential::nodes() const {
  switch (kind) {
    case PotentialKind::harmonic_chain: return static_cast<std::size_t>(particles);
    case PotentialKind::double_well_trimer: return 3;
    default: return 1;
  }
}

void Potential::validate() const {
  if ((kind == PotentialKind::double_well || kind == PotentialKind::harmonic) && (dim < 1 || dim > 3)) {
    throw std::invalid_argument("potential: dim must be 1, 2 or 3");
  }
  if (kind == PotentialKind::harmonic_chain && particles < 1) throw std::invalid_argument("potential: no particles");
  if (kind == PotentialKind::gaussian_mixture_3d) {
    if (centers.empty() || centers.size() != weights.size() || centers.size() != widths.size()) {
      throw std::invalid_argument("potential: mixture needs matching centers, weights and widths");
    }
    for (std::size_t i = 0; i < centers.size(); ++i) {
      if (!(weights[i] > 0.0) || !(widths[i] > 0.0)) throw std::invalid_argument("potential: bad mixture component");
    }
  }
  if (kind == PotentialKind::double_well_trimer && !(s > 0.0)) throw std::invalid_argument("potential: s must be > 0");
}

namespace {

Vec3 at(std::span<const double> x, std::size_t i) { return {x[3 * i], x[3 * i + 1], x[3 * i + 2]}; }

void add(std::span<double> g, std::size_t i, const Vec3& v) {
  g[3 * i] += v.x();
  g[3 * i + 1] += v.y();
  g[3 * i + 2] += v.z();
}

// Energy of a scalar function f(d) of the distance between particles i, j;
// adds its gradient when g is non-empty.
template <class F>
double pair_term(std::span<const double> x, std::size_t i, std::size_t j, F f, std::span<double> g) {
  const Vec3 r = at(x, i) - at(x, j);
  const double d = r.norm();
  const auto [e, de] = f(d);
  if (!g.empty()) {
    if (d == 0.0) throw std::runtime_error("potential: coincident particles");
    const Vec3 u = r / d * de;
    add(g, i, u);
    add(g, j, -u);
  }
  return e;
}

double evaluate(const Potential& p, std::span<const double> x, std::span<double> g) {
  if (x.size() != p.size()) throw std::invalid_argument("potential: coordinate count mismatch");
  if (!g.empty()) std::fill(g.begin(), g.end(), 0.0);
  switch (p.kind) {
    case PotentialKind::double_well: {
      const double u = x[0] * x[0] - 1.0;
      double e = p.a * u * u + p.c * x[0];
      if (!g.empty()) g[0] = 4.0 * p.a * u * x[0] + p.c;
      for (std::size_t d = 1; d < x.size(); ++d) {
        e += 0.5 * p.k * x[d] * x[d];
        if (!g.empty()) g[d] = p.k * x[d];
      }
      return e;
    }
    case PotentialKind::harmonic: {
      double e = 0.0;
      for (std::size_t d = 0; d < x.size(); ++d) {
        e += 0.5 * p.k * x[d] * x[d];
        if (!g.empty()) g[d] = p.k * x[d];
      }
      return e;
    }
    case PotentialKind::harmonic_chain: {
      double e = 0.0;
      auto spring = [&](double d) { return std::pair{0.5 * p.k * (d - p.r0) * (d - p.r0), p.k * (d - p.r0)}; };
      for (std::size_t i = 0; i + 1 < p.nodes(); ++i) e += pair_term(x, i, i + 1, spring, g);
      return e;
    }
    case PotentialKind::gaussian_mixture_3d: {
      const Vec3 r = at(x, 0);
      std::vector<double> logs(p.centers.size());
      for (std::size_t i = 0; i < p.centers.size(); ++i) {
        const double s2 = p.widths[i] * p.widths[i];
        logs[i] = std::log(p.weights[i]) - 1.5 * std::log(2.0 * std::numbers::pi * s2) -
                  (r - p.centers[i]).squaredNorm() / (2.0 * s2);
      }
      const double m = *std::max_element(logs.begin(), logs.end());
      double z = 0.0;
      for (double l : logs) z += std::exp(l - m);
      const double log_sum = m + std::log(z);
      if (!g.empty()) {
        Vec3 grad = Vec3::Zero();
        for (std::size_t i = 0; i < p.centers.size(); ++i) {
          const double w = std::exp(logs[i] - log_sum);
          grad += w * (r - p.centers[i]) / (p.widths[i] * p.widths[i]);
        }
        add(g, 0, p.kT * grad);
      }
      return -p.kT * log_sum;
    }
    case PotentialKind::double_well_trimer: {
      auto well = [&](double d) {
        const double q = (d - p.r0) / p.s;
        const double u = q * q - 1.0;
        return std::pair{p.a * u * u, 4.0 * p.a * u * q / p.s};
      };
      auto spring = [&](double rest) {
        return [&p, rest](double d) { return std::pair{0.5 * p.k * (d - rest) * (d - rest), p.k * (d - rest)}; };
      };
      return pair_term(x, 0, 1, well, g) + pair_term(x, 1, 2, spring(p.r12), g) + pair_term(x, 0, 2, spring(p.r02), g);
    }
  }
  return 0.0;
}

}  // namespace

double Potential::energy(std::span<const double> x) const { return evaluate(*this, x, {}); }

double Potential::gradient(std::span<const double> x, std::span<double> g) const {
  if (g.size() != x.size()) throw std::invalid_argument("potential: gradient buffer size mismatch");
  return evaluate(*this, x, g);
}

Potential default_double_well() {
  Potential p;
  p.kind = PotentialKind::double_well;
  p.dim = 2;
  p.a = 2.0;
  p.k = 4.0;
  return p;
}

Potential default_trimer() {
  Potential p;
  p.kind = PotentialKind::double_well_trimer;
  p.a = 2.0;
  p.k = 4.0;
  p.r0 = 4.0;
  p.s = 1.0;
  p.r12 = 4.0;
  p.r02 = 5.0;
  return p;
}

void BdConfig::validate(std::size_t n_coords) const {
  if (!(dt > 0.0)) throw std::invalid_argument("bd: dt must be > 0");
  if (!(kT >= 0.0)) throw std::invalid_argument("bd: kT must be >= 0");
  if (stride < 1) throw std::invalid_argument("bd: stride must be >= 1");
  if (steps < 0) throw std::invalid_argument("bd: steps must be >= 0");
  if (friction.size() != 1 && friction.size() != n_coords) {
    throw std::invalid_argument("bd: friction needs 1 or " + std::to_string(n_coords) + " entries");
  }
  for (double r : friction) {
    if (!(r > 0.0)) throw std::invalid_argument("bd: friction must be positive definite");
  }
}

void bd_step(std::span<double> x, const Potential& pot, const BdConfig& config, std::mt19937_64& rng,
             std::span<double> scratch) {
  pot.gradient(x, scratch);
  std::normal_distribution<double> normal(0.0, 1.0);
  const bool broadcast = config.friction.size() == 1;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = broadcast ? config.friction[0] : config.friction[i];
    x[i] += -scratch[i] / r * config.dt + std::sqrt(2.0 * config.kT * config.dt / r) * normal(rng);
    if (!std::isfinite(x[i])) throw std::runtime_error("bd: non-finite state");
  }
}

std::vector<double> bd_step(std::span<const double> x, const Potential& pot, const BdConfig& config,
                            std::mt19937_64& rng) {
  config.validate(x.size());
  std::vector<double> out(x.begin(), x.end());
  std::vector<double> scratch(x.size());
  bd_step(out, pot, config, rng, scratch);
  return out;
}

std::vector<std::vector<double>> simulate(const Potential& pot, const BdConfig& config, std::vector<double> x0,
                                          std::mt19937_64& rng) {
  pot.validate();
  config.validate(pot.size());
  if (x0.size() != pot.size()) throw std::invalid_argument("simulate: initial state size mismatch");
  std::vector<std::vector<double>> frames;
  frames.reserve(static_cast<std::size_t>(config.steps / config.stride + 1));
  frames.push_back(x0);
  std::vector<double> scratch(x0.size());
  for (long s = 1; s <= config.steps; ++s) {
    bd_step(x0, pot, config, rng, scratch);
    if (s % config.stride == 0) frames.push_back(x0);
  }
  return frames;
}

TensorCloud to_cloud(const Potential& pot, std::span<const double> x) {
  const std::size_t n = pot.nodes();
  TensorCloud out(IrrepsSpec(), n);
  // Low-dimensional worlds fill x (and y) of their single node.
  std::copy(x.begin(), x.end(), out.positions().begin());
  return out;
}

std::vector<double> initial_state(const Potential& pot) {
  std::vector<double> x(pot.size(), 0.0);
  switch (pot.kind) {
    case PotentialKind::double_well: x[0] = -1.0; break;
    case PotentialKind::harmonic: break;
    case PotentialKind::harmonic_chain:
      for (int i = 0; i < pot.particles; ++i) x[3 * static_cast<std::size_t>(i)] = pot.r0 * i;
      break;
    case PotentialKind::gaussian_mixture_3d:
      for (int d = 0; d < 3; ++d) x[static_cast<std::size_t>(d)] = pot.centers.at(0)[d];
      break;
    case PotentialKind::double_well_trimer: {
      // Particle 1 in the short well on the x axis, particle 2 placed by the
      // law of cosines so both springs are at rest.
      const double d01 = pot.r0 - pot.s;
      const double cx = (d01 * d01 + pot.r02 * pot.r02 - pot.r12 * pot.r12) / (2.0 * d01);
      const double cy = std::sqrt(std::max(0.0, pot.r02 * pot.r02 - cx * cx));
      x[3] = d01;
      x[6] = cx;
      x[7] = cy;
      break;
    }
  }
  return x;
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x7a3u};
  return std::mt19937_64(seq);
}

Dataset generate_dataset(const Potential& pot, const BdConfig& config, const DatasetOptions& options,
                         std::uint64_t seed) {
  if (options.pair_lag < 1) throw std::invalid_argument("generate_dataset: pair_lag must be >= 1");
  if (options.n_trajectories < 0) throw std::invalid_argument("generate_dataset: negative trajectory count");
  pot.validate();
  config.validate(pot.size());
  Dataset data;
  for (int t = 0; t < options.n_trajectories; ++t) {
    auto rng = stream(seed, static_cast<std::uint64_t>(t));
    auto x0 = initial_state(pot);
    std::vector<double> scratch(x0.size());
    for (long s = 0; s < options.burn_in; ++s) bd_step(x0, pot, config, rng, scratch);
    const auto states = simulate(pot, config, std::move(x0), rng);
    Trajectory traj;
    traj.spec = IrrepsSpec();
    traj.n_nodes = pot.nodes();
    traj.labels.assign(traj.n_nodes, options.label);
    if (options.label < 0) std::iota(traj.labels.begin(), traj.labels.end(), 0);
    traj.frame_interval = config.dt * static_cast<double>(config.stride);
    traj.frames.reserve(states.size());
    for (const auto& s : states) {
      auto c = to_cloud(pot, s);
      traj.frames.push_back(options.recenter ? recenter(c) : std::move(c));
    }
    const std::size_t lag = static_cast<std::size_t>(options.pair_lag);
    for (std::size_t f = 0; f + lag < traj.frames.size(); ++f) {
      data.pairs.push_back({static_cast<std::uint32_t>(t), f, static_cast<std::uint32_t>(lag)});
    }
    data.trajectories.push_back(std::move(traj));
  }
  return data;
}

}  // namespace tensorjump::worlds
