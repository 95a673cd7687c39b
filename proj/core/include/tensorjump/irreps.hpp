#pragma once

// SO(3) representation algebra over real spherical harmonics.
//
// Basis convention: real spherical harmonics normalized so that every degree
// has unit norm on the unit sphere (Y_0 = 1, Y_1(r) = r / |r| in x, y, z
// order). Degrees l >= 2 use the standard real m = -l..l ordering without the
// Condon-Shortley phase. Wigner-D matrices and Clebsch-Gordan tensors are
// derived from the harmonics themselves, so all three share this basis.

#include <Eigen/Dense>

#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tensorjump::irreps {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

constexpr int degree_dim(int l) { return 2 * l + 1; }

class DegenerateDirection : public std::domain_error {
 public:
  DegenerateDirection() : std::domain_error("degenerate direction") {}
};

struct IrrepBlock {
  int degree = 0;
  int multiplicity = 0;
  bool operator==(const IrrepBlock&) const = default;
};

/// Ordered list of (degree, multiplicity) pairs describing one node's
/// feature array. Storage is degree-major, then channel-major, then m.
class IrrepsSpec {
 public:
  IrrepsSpec() = default;
  explicit IrrepsSpec(std::vector<IrrepBlock> blocks);

  /// Degrees 0..lmax, each with the same multiplicity.
  static IrrepsSpec uniform(int lmax, int multiplicity);
  /// Parses "8x0+8x1"; the empty string yields an empty spec.
  static IrrepsSpec parse(std::string_view text);

  const std::vector<IrrepBlock>& blocks() const { return blocks_; }
  bool empty() const { return blocks_.empty(); }
  int lmax() const { return blocks_.empty() ? -1 : blocks_.back().degree; }
  int multiplicity(int l) const;
  bool has(int l) const { return multiplicity(l) > 0; }
  /// Offset of the degree-l block inside a node array (l must be present).
  std::size_t offset(int l) const;
  std::size_t dim() const { return dim_; }
  std::size_t channels() const;
  std::string str() const;

  bool operator==(const IrrepsSpec& other) const { return blocks_ == other.blocks_; }

 private:
  std::vector<IrrepBlock> blocks_;
  std::vector<std::size_t> offsets_;
  std::size_t dim_ = 0;
};

/// A single-degree feature: multiplicity x (2l+1) values, channel-major.
struct Irrep {
  int degree = 0;
  int multiplicity = 1;
  std::vector<double> data;

  Irrep() = default;
  Irrep(int l, int h);
  Irrep(int l, int h, std::vector<double> values);
  double& at(int c, int m) { return data[static_cast<std::size_t>(c * degree_dim(degree) + m)]; }
  double at(int c, int m) const { return data[static_cast<std::size_t>(c * degree_dim(degree) + m)]; }
};

/// Feature array of one node conforming to a spec.
struct IrrepsArray {
  IrrepsSpec spec;
  std::vector<double> data;

  IrrepsArray() = default;
  explicit IrrepsArray(IrrepsSpec s);
  IrrepsArray(IrrepsSpec s, std::vector<double> values);
  std::span<double> block(int l);
  std::span<const double> block(int l) const;
};

// ---------------------------------------------------------------------------
// Harmonics, Wigner-D, Clebsch-Gordan

/// Y_l(r / |r|); throws DegenerateDirection for zero or non-finite r.
std::vector<double> spherical_harmonics(int l, const Vec3& r);
/// Y_0..Y_lmax concatenated into out (size (lmax+1)^2).
void spherical_harmonics_upto(int lmax, const Vec3& r, std::span<double> out);

/// Throws std::invalid_argument unless R is orthogonal (1e-10) with det +1.
void check_rotation(const Mat3& R, double tol = 1e-10);
Eigen::MatrixXd wigner_d(int l, const Mat3& R);
Mat3 random_rotation(std::mt19937_64& rng);

struct CgEntry {
  int m1;
  int m2;
  int m3;
  double value;
};

/// Real Clebsch-Gordan coupling tensor, index order [m1][m2][m3].
/// Normalized so that sum_{m1,m2} C^2 = 1 for every m3.
struct CgTensor {
  int l1 = 0;
  int l2 = 0;
  int l3 = 0;
  std::vector<double> dense;
  std::vector<CgEntry> nonzero;
  // Same entries grouped by m3; group m3 spans [m3_offset[m3], m3_offset[m3+1]).
  std::vector<CgEntry> by_m3;
  std::vector<int> m3_offset;

  double at(int m1, int m2, int m3) const {
    return dense[static_cast<std::size_t>((m1 * degree_dim(l2) + m2) * degree_dim(l3) + m3)];
  }
};

bool triangle(int l1, int l2, int l3);

/// Cached, thread-safe. Throws std::invalid_argument on triangle violation.
/// When TENSORJUMP_CACHE names a directory, tables are persisted there.
const CgTensor& clebsch_gordan(int l1, int l2, int l3);

// ---------------------------------------------------------------------------
// Feature operations (single node)

/// Channel-wise coupling of a and b into degree l_out. b may carry a single
/// channel, which is then broadcast against every channel of a.
Irrep tensor_product(const Irrep& a, const Irrep& b, int l_out);

struct SquarePath {
  int l1;
  int l2;
  int l_out;
};

/// Layout of V (+) V^{x2}: for every output degree, the input channels of that
/// degree come first, then one channel group per (l1 <= l2) path.
struct TensorSquarePlan {
  IrrepsSpec input;
  IrrepsSpec output;
  std::vector<SquarePath> paths;
  // For every path: number of channels (min of the two multiplicities) and
  // the channel offset within the output block of degree l_out.
  std::vector<int> path_channels;
  std::vector<int> path_channel_offset;
};

/// lmax_out < 0 keeps every allowed degree. skip_vanishing drops the
/// antisymmetric l1 == l2 paths, which are identically zero for a square.
TensorSquarePlan make_square_plan(const IrrepsSpec& input, int lmax_out = -1, bool skip_vanishing = false);
IrrepsArray tensor_square(const IrrepsArray& v);
IrrepsArray tensor_square(const TensorSquarePlan& plan, const IrrepsArray& v);

/// Per-degree channel mixing. weights[l] is (H_out x H_in); degrees of the
/// output spec absent from the input produce zeros.
struct DegreeWeights {
  std::vector<int> degrees;
  std::vector<Eigen::MatrixXd> matrices;
};
IrrepsArray linear_mix(const IrrepsArray& v, const DegreeWeights& weights);

/// l = 0: standard layer norm across channels. l > 0: every channel divided
/// by sqrt(mean_c |v_c|^2 + eps).
IrrepsArray layer_norm(const IrrepsArray& v, double eps = 1e-6);

/// Applies D_l(R) to every channel of every degree.
IrrepsArray rotate(const IrrepsArray& v, const Mat3& R);
void rotate_in_place(const IrrepsSpec& spec, std::span<double> node_data, const Mat3& R);

}  // namespace tensorjump::irreps
