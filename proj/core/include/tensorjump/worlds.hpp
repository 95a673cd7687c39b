#pragma once

// Ground-truth data: overdamped Brownian dynamics on analytic potentials,
// emitted as tensor-cloud trajectories.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tensorjump/trajectory.hpp"

namespace tensorjump::worlds {

enum class PotentialKind {
  /// E = a (x0^2 - 1)^2 + c x0 + k/2 sum_{d>0} x_d^2 over `dim` coordinates.
  double_well,
  /// E = k/2 |x|^2.
  harmonic,
  /// Particles in 3D joined consecutively by springs k/2 (|r| - r0)^2.
  harmonic_chain,
  /// E = -kT log sum_i w_i N(x; mu_i, s_i^2 I) for one particle in 3D.
  gaussian_mixture_3d,
  /// Three particles: a double well on q01 = (d01 - r0)/s plus springs on
  /// d12 and d02. Bistability in an internal coordinate, so the dynamics are
  /// rotation and translation invariant.
  double_well_trimer,
};

PotentialKind parse_potential(const std::string& name);
std::string to_string(PotentialKind kind);

struct Potential {
  PotentialKind kind = PotentialKind::double_well;
  int dim = 2;          // double_well / harmonic: number of coordinates
  int particles = 1;    // harmonic_chain
  double a = 2.0;       // double-well barrier height (x = 0 vs wells)
  double c = 0.0;       // double-well tilt
  double k = 4.0;       // spring / confinement constant
  double r0 = 4.0;      // rest length (chain, trimer double-well centre)
  double s = 1.0;       // trimer double-well length scale: wells at r0 +- s
  double r12 = 4.0;     // trimer spring rest lengths
  double r02 = 5.0;
  double kT = 1.0;      // gaussian mixture temperature
  std::vector<Vec3> centers;
  std::vector<double> weights;
  std::vector<double> widths;

  /// Number of flat coordinates.
  std::size_t size() const;
  /// Nodes of the emitted cloud (particles; 1 for the low-dimensional kinds).
  std::size_t nodes() const;
  void validate() const;
  double energy(std::span<const double> x) const;
  /// Exact analytic gradient; returns the energy.
  double gradient(std::span<const double> x, std::span<double> g) const;
};

/// The default toy world: symmetric 2D double well, a = 2, k = 4 (kT units).
Potential default_double_well();
/// The default trimer used for the end-to-end experiment.
Potential default_trimer();

struct BdConfig {
  /// Diagonal friction, one entry (broadcast) or one per coordinate.
  std::vector<double> friction{1.0};
  double kT = 1.0;
  double dt = 1e-3;
  long steps = 10000;
  long stride = 1;
  void validate(std::size_t n_coords) const;
};

/// x <- x - R^-1 grad E dt + sqrt(2 kT dt) R^-1/2 xi.
void bd_step(std::span<double> x, const Potential& pot, const BdConfig& config, std::mt19937_64& rng,
             std::span<double> scratch);
std::vector<double> bd_step(std::span<const double> x, const Potential& pot, const BdConfig& config,
                            std::mt19937_64& rng);

/// Runs config.steps steps from x0 and keeps every stride-th state
/// (including x0). Throws on a non-finite state.
std::vector<std::vector<double>> simulate(const Potential& pot, const BdConfig& config, std::vector<double> x0,
                                          std::mt19937_64& rng);

/// Flat coordinates to a cloud with an empty feature spec (z = 0 for dim < 3).
TensorCloud to_cloud(const Potential& pot, std::span<const double> x);
/// A starting configuration in the first well / at rest.
std::vector<double> initial_state(const Potential& pot);

struct PairIndex {
  std::uint32_t trajectory = 0;
  std::uint64_t frame = 0;
  std::uint32_t lag = 1;
};

struct Dataset {
  std::vector<Trajectory> trajectories;
  std::vector<PairIndex> pairs;
};

struct DatasetOptions {
  int n_trajectories = 1;
  int pair_lag = 1;      // in kept frames
  bool recenter = true;  // subtract the centroid from every frame
  int label = 0;         // node label for every node; -1 labels node i with i
  /// Steps discarded before recording, so the start is equilibrated.
  long burn_in = 0;
};

/// Simulates independent trajectories (stream i seeded from (seed, i)) and
/// indexes every (t, t + lag) pair.
Dataset generate_dataset(const Potential& pot, const BdConfig& config, const DatasetOptions& options,
                         std::uint64_t seed);

/// Per-trajectory generator derived from (seed, index).
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t index);

}  // namespace tensorjump::worlds
