#pragma once

// Tensor clouds: N nodes, each carrying an irreps feature array V and a 3D
// position P (Angstrom). Together with axpy and dot they form an inner
// product space on which the transports operate.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "tensorjump/irreps.hpp"

namespace tensorjump {

using irreps::IrrepsSpec;
using irreps::Mat3;
using irreps::Vec3;

struct NoiseScales {
  double sigma2_v = 1.0;
  double sigma2_p = 3.0;
  /// Throws unless both variances are strictly positive and finite.
  void validate() const;
};

class TensorCloud {
 public:
  TensorCloud() = default;
  /// All-zero cloud without a mask.
  TensorCloud(IrrepsSpec spec, std::size_t n_nodes);

  const IrrepsSpec& spec() const { return spec_; }
  std::size_t size() const { return n_; }
  std::size_t feature_dim() const { return spec_.dim(); }

  std::vector<double>& features() { return v_; }
  const std::vector<double>& features() const { return v_; }
  std::vector<double>& positions() { return p_; }
  const std::vector<double>& positions() const { return p_; }

  std::span<double> feature(std::size_t i) { return {v_.data() + i * spec_.dim(), spec_.dim()}; }
  std::span<const double> feature(std::size_t i) const { return {v_.data() + i * spec_.dim(), spec_.dim()}; }
  Vec3 position(std::size_t i) const { return {p_[3 * i], p_[3 * i + 1], p_[3 * i + 2]}; }
  void set_position(std::size_t i, const Vec3& p) {
    p_[3 * i] = p.x();
    p_[3 * i + 1] = p.y();
    p_[3 * i + 2] = p.z();
  }

  // Channel mask: one byte per (node, channel), channels in spec order
  // (degree-major). 1 = active. Empty mask = everything active.
  bool has_mask() const { return !mask_.empty(); }
  const std::vector<std::uint8_t>& mask() const { return mask_; }
  /// Installs a mask and zeroes masked channels.
  void set_mask(std::vector<std::uint8_t> mask);
  void clear_mask() { mask_.clear(); }
  bool channel_active(std::size_t node, std::size_t channel) const {
    return mask_.empty() || mask_[node * spec_.channels() + channel] != 0;
  }
  /// Zeroes every masked feature entry.
  void apply_mask();
  /// Per feature entry of one node: 1.0 if its channel is active, else 0.0.
  std::vector<double> entry_mask(std::size_t node) const;

  bool same_shape(const TensorCloud& other) const { return n_ == other.n_ && spec_ == other.spec_; }
  bool bitwise_equal(const TensorCloud& other) const;

 private:
  IrrepsSpec spec_;
  std::size_t n_ = 0;
  std::vector<double> v_;
  std::vector<double> p_;
  std::vector<std::uint8_t> mask_;
};

/// sum_i (V_i . V'_i + P_i . P'_i), masked channels excluded.
double dot(const TensorCloud& a, const TensorCloud& b);
/// a * x + y (mask taken from y).
TensorCloud axpy(double a, const TensorCloud& x, const TensorCloud& y);
/// y += a * x in place.
void axpy_in_place(double a, const TensorCloud& x, TensorCloud& y);
TensorCloud scale(double a, const TensorCloud& x);
double norm(const TensorCloud& x);
Vec3 centroid(const TensorCloud& x);
TensorCloud recenter(const TensorCloud& x);
TensorCloud translate(const TensorCloud& x, const Vec3& shift);
/// P -> R P, V -> D(R) V for every node.
TensorCloud rotate(const TensorCloud& x, const Mat3& R);

/// i.i.d. normal entries: features with variance sigma2_v, positions with
/// variance sigma2_p.
TensorCloud sample_gaussian(const IrrepsSpec& spec, std::size_t n_nodes, const NoiseScales& scales,
                            std::mt19937_64& rng);
/// Same shape and mask as `like`; masked channels zeroed after the draw.
TensorCloud sample_gaussian_like(const TensorCloud& like, const NoiseScales& scales, std::mt19937_64& rng);

void require_same_shape(const TensorCloud& a, const TensorCloud& b, const char* where);

}  // namespace tensorjump
