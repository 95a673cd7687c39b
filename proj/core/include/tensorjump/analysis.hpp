#pragma once

// Equilibrium analysis: TICA, k-means, MSM reweighting, structural
// observables, divergences and chemistry checks.

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "tensorjump/protein.hpp"
#include "tensorjump/trajectory.hpp"

namespace tensorjump::analysis {

/// Rows are frames, columns are features.
using Matrix = Eigen::MatrixXd;

struct ObservableSeries {
  std::string name;  // TIC1, TIC2, RMSD, GDT, RG, FNC or custom
  std::vector<double> values;
  std::string units;
  /// Throws on a non-finite value.
  void validate() const;
};

/// Upper-triangle pairwise node-position distances, one row per frame.
Matrix featurize_ca_distances(const Trajectory& traj);

struct TicaModel {
  int lag = 1;
  Eigen::VectorXd mean;
  /// Columns are components, normalized so that v' C0 v = 1.
  Matrix components;
  Eigen::VectorXd eigenvalues;  // descending
  std::string featurization = "ca_distances";
  int dim() const { return static_cast<int>(mean.size()); }
};

/// Lagged pairs never cross trajectory boundaries.
TicaModel tica_fit(const std::vector<Matrix>& features, int lag);
TicaModel tica_fit(const Matrix& features, int lag);
/// Mean-centred projection on the leading n components (-1 = all).
Matrix tica_project(const TicaModel& model, const Matrix& features, int n_components = -1);

struct KMeansResult {
  Matrix centers;  // k x d
  std::vector<int> labels;
  double inertia = 0.0;
  int iterations = 0;
};

/// k-means++ seeding, then Lloyd iterations until the relative inertia
/// change drops below 1e-6 (or 500 iterations).
KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed);
/// Nearest-center label for every row.
std::vector<int> assign_clusters(const Matrix& centers, const Matrix& points);

struct MsmModel {
  int n_states = 0;
  Matrix centers;  // optional, in TIC space
  int lag = 1;
  Matrix transition;  // row stochastic
  Eigen::VectorXd pi;
  /// States kept in the largest connected set.
  std::vector<int> active;
};

/// Sliding-window counts at `lag` within each trajectory.
MsmModel msm_estimate(const std::vector<std::vector<int>>& labels, int lag, int n_states);
MsmModel msm_estimate(const std::vector<int>& labels, int lag, int n_states);
/// Left fixed point of a row-stochastic matrix (unique if irreducible).
Eigen::VectorXd stationary_distribution(const Matrix& transition);

struct Histogram {
  std::vector<double> edges;    // bins + 1
  std::vector<double> density;  // per-bin mass, sums to 1
  std::size_t bins() const { return density.size(); }
};

std::vector<double> uniform_edges(double lo, double hi, int bins);
/// 64 uniform bins (by default) over the union range of both series.
std::vector<double> shared_edges(const std::vector<double>& a, const std::vector<double>& b, int bins = 64);
/// Weighted histogram normalized to total mass 1. Out-of-range values land
/// in the end bins.
Histogram histogram(const std::vector<double>& values, const std::vector<double>& edges,
                    const std::vector<double>& weights = {});
/// Frame weight pi(c) / count(c).
Histogram reweight_histogram(const ObservableSeries& values, const std::vector<int>& labels, const MsmModel& msm,
                             const std::vector<double>& edges);
/// 1 / (k * size(cluster)).
std::vector<double> cluster_weights(const std::vector<int>& labels, int k);
std::vector<double> cluster_weights_for_training(const Matrix& tic_points, int k, std::uint64_t seed);

struct Alignment {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  std::vector<Vec3> aligned;
};

/// Optimal proper rotation + translation taking mobile onto reference.
Alignment kabsch_align(const std::vector<Vec3>& mobile, const std::vector<Vec3>& reference);
double rmsd(const std::vector<Vec3>& aligned, const std::vector<Vec3>& reference);
/// Mean over d in {1, 2, 4, 8} of the fraction within d.
double gdt(const std::vector<Vec3>& aligned, const std::vector<Vec3>& reference);
double radius_of_gyration(const std::vector<Vec3>& coords, const std::vector<double>& masses = {});
double fraction_native_contacts(const std::vector<Vec3>& coords, const std::vector<Vec3>& reference,
                                double cutoff = 8.0, int min_seq_sep = 3);

/// Jensen-Shannon divergence in nats of two normalized densities.
double js_divergence(const std::vector<double>& p, const std::vector<double>& q);
/// -kT ln p shifted to min 0; empty bins are +inf.
std::vector<double> free_energy(const std::vector<double>& density, double kT = 1.0);
inline constexpr double kEmptyBin = std::numeric_limits<double>::infinity();

struct ChemistryOptions {
  std::vector<double> bond_edges = uniform_edges(0.0, 3.0, 60);     // Angstrom
  std::vector<double> angle_edges = uniform_edges(0.0, 180.0, 90);  // degrees
  /// Pairs within this many bonds are never clashes.
  int exclude_bonds = 3;
  /// Overlap allowed before a contact counts as a clash.
  double clash_tolerance = 0.4;
};

struct ChemistryReport {
  std::vector<double> bond_edges;
  std::vector<double> bond_counts;
  std::vector<double> angle_edges;
  std::vector<double> angle_counts;
  std::size_t bonds = 0;
  std::size_t angles = 0;
  std::size_t clashes = 0;
};

ChemistryReport chemistry_report(const protein::Coordinates& coords, const protein::Topology& topology,
                                 const ChemistryOptions& options = {});

}  // namespace tensorjump::analysis
