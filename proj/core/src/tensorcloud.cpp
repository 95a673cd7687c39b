#include "tensorjump/tensorcloud.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tensorjump {

void NoiseScales::validate() const {
  if (!(sigma2_v > 0.0) || !(sigma2_p > 0.0) || !std::isfinite(sigma2_v) || !std::isfinite(sigma2_p)) {
    throw std::invalid_argument("NoiseScales: variances must be positive and finite");
  }
}

TensorCloud::TensorCloud(IrrepsSpec spec, std::size_t n_nodes)
    : spec_(std::move(spec)), n_(n_nodes), v_(n_nodes * spec_.dim(), 0.0), p_(3 * n_nodes, 0.0) {}

void TensorCloud::set_mask(std::vector<std::uint8_t> mask) {
  if (!mask.empty() && mask.size() != n_ * spec_.channels()) {
    throw std::invalid_argument("TensorCloud: mask must have one entry per node channel");
  }
  mask_ = std::move(mask);
  apply_mask();
}

void TensorCloud::apply_mask() {
  if (mask_.empty()) return;
  const std::size_t channels = spec_.channels();
  for (std::size_t i = 0; i < n_; ++i) {
    std::size_t ch = 0;
    double* node = v_.data() + i * spec_.dim();
    for (const auto& b : spec_.blocks()) {
      const int d = irreps::degree_dim(b.degree);
      double* base = node + spec_.offset(b.degree);
      for (int c = 0; c < b.multiplicity; ++c, ++ch) {
        if (mask_[i * channels + ch] == 0) {
          for (int m = 0; m < d; ++m) base[c * d + m] = 0.0;
        }
      }
    }
  }
}

std::vector<double> TensorCloud::entry_mask(std::size_t node) const {
  std::vector<double> out(spec_.dim(), 1.0);
  if (mask_.empty()) return out;
  std::size_t ch = 0;
  for (const auto& b : spec_.blocks()) {
    const int d = irreps::degree_dim(b.degree);
    const std::size_t base = spec_.offset(b.degree);
    for (int c = 0; c < b.multiplicity; ++c, ++ch) {
      if (mask_[node * spec_.channels() + ch] == 0) {
        for (int m = 0; m < d; ++m) out[base + static_cast<std::size_t>(c * d + m)] = 0.0;
      }
    }
  }
  return out;
}

bool TensorCloud::bitwise_equal(const TensorCloud& other) const {
  return same_shape(other) && v_ == other.v_ && p_ == other.p_ && mask_ == other.mask_;
}

void require_same_shape(const TensorCloud& a, const TensorCloud& b, const char* where) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(where) + ": node count mismatch (" + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  }
  if (!(a.spec() == b.spec())) {
    throw std::invalid_argument(std::string(where) + ": spec mismatch (" + a.spec().str() + " vs " + b.spec().str() + ")");
  }
}

double dot(const TensorCloud& a, const TensorCloud& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  const auto& pa = a.positions();
  const auto& pb = b.positions();
  for (std::size_t k = 0; k < pa.size(); ++k) s += pa[k] * pb[k];
  const auto& va = a.features();
  const auto& vb = b.features();
  if (!a.has_mask() && !b.has_mask()) {
    for (std::size_t k = 0; k < va.size(); ++k) s += va[k] * vb[k];
    return s;
  }
  const std::size_t dim = a.feature_dim();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto ma = a.entry_mask(i);
    const auto mb = b.entry_mask(i);
    for (std::size_t k = 0; k < dim; ++k) s += ma[k] * mb[k] * va[i * dim + k] * vb[i * dim + k];
  }
  return s;
}

void axpy_in_place(double a, const TensorCloud& x, TensorCloud& y) {
  require_same_shape(x, y, "axpy");
  auto& vy = y.features();
  const auto& vx = x.features();
  for (std::size_t k = 0; k < vy.size(); ++k) vy[k] += a * vx[k];
  auto& py = y.positions();
  const auto& px = x.positions();
  for (std::size_t k = 0; k < py.size(); ++k) py[k] += a * px[k];
  y.apply_mask();
}

TensorCloud axpy(double a, const TensorCloud& x, const TensorCloud& y) {
  TensorCloud out = y;
  axpy_in_place(a, x, out);
  return out;
}

TensorCloud scale(double a, const TensorCloud& x) {
  TensorCloud out = x;
  for (double& v : out.features()) v *= a;
  for (double& p : out.positions()) p *= a;
  return out;
}

double norm(const TensorCloud& x) { return std::sqrt(dot(x, x)); }

Vec3 centroid(const TensorCloud& x) {
  if (x.size() == 0) throw std::invalid_argument("centroid: empty cloud");
  Vec3 c = Vec3::Zero();
  for (std::size_t i = 0; i < x.size(); ++i) c += x.position(i);
  return c / static_cast<double>(x.size());
}

TensorCloud translate(const TensorCloud& x, const Vec3& shift) {
  TensorCloud out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out.set_position(i, out.position(i) + shift);
  return out;
}

TensorCloud recenter(const TensorCloud& x) { return translate(x, -centroid(x)); }

TensorCloud rotate(const TensorCloud& x, const Mat3& R) {
  irreps::check_rotation(R);
  TensorCloud out = x;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.set_position(i, R * x.position(i));
    irreps::rotate_in_place(out.spec(), out.feature(i), R);
  }
  return out;
}

TensorCloud sample_gaussian(const IrrepsSpec& spec, std::size_t n_nodes, const NoiseScales& scales,
                            std::mt19937_64& rng) {
  scales.validate();
  TensorCloud out(spec, n_nodes);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sv = std::sqrt(scales.sigma2_v);
  const double sp = std::sqrt(scales.sigma2_p);
  for (double& v : out.features()) v = sv * normal(rng);
  for (double& p : out.positions()) p = sp * normal(rng);
  return out;
}

TensorCloud sample_gaussian_like(const TensorCloud& like, const NoiseScales& scales, std::mt19937_64& rng) {
  TensorCloud out = sample_gaussian(like.spec(), like.size(), scales, rng);
  if (like.has_mask()) out.set_mask(like.mask());
  return out;
}

}  // namespace tensorjump
