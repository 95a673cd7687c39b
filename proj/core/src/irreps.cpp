#include "tensorjump/irreps.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>
#include <tuple>

namespace tensorjump::irreps {

// ---------------------------------------------------------------------------
// IrrepsSpec

IrrepsSpec::IrrepsSpec(std::vector<IrrepBlock> blocks) : blocks_(std::move(blocks)) {
  int previous = -1;
  offsets_.reserve(blocks_.size());
  for (const auto& b : blocks_) {
    if (b.degree < 0) throw std::invalid_argument("IrrepsSpec: negative degree");
    if (b.multiplicity < 1) throw std::invalid_argument("IrrepsSpec: multiplicity must be >= 1");
    if (b.degree <= previous) throw std::invalid_argument("IrrepsSpec: degrees must be sorted and distinct");
    previous = b.degree;
    offsets_.push_back(dim_);
    dim_ += static_cast<std::size_t>(b.multiplicity * degree_dim(b.degree));
  }
}

IrrepsSpec IrrepsSpec::uniform(int lmax, int multiplicity) {
  std::vector<IrrepBlock> blocks;
  for (int l = 0; l <= lmax; ++l) blocks.push_back({l, multiplicity});
  return IrrepsSpec(std::move(blocks));
}

IrrepsSpec IrrepsSpec::parse(std::string_view text) {
  std::vector<IrrepBlock> blocks;
  std::string s(text);
  s.erase(std::remove_if(s.begin(), s.end(), [](unsigned char ch) { return std::isspace(ch); }), s.end());
  if (s.empty()) return IrrepsSpec();
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, '+')) {
    const auto x = item.find('x');
    if (x == std::string::npos) throw std::invalid_argument("IrrepsSpec::parse: expected <mult>x<degree> in '" + item + "'");
    std::string deg = item.substr(x + 1);
    if (!deg.empty() && (deg.back() == 'e' || deg.back() == 'o')) deg.pop_back();
    blocks.push_back({std::stoi(deg), std::stoi(item.substr(0, x))});
  }
  return IrrepsSpec(std::move(blocks));
}

int IrrepsSpec::multiplicity(int l) const {
  for (const auto& b : blocks_) {
    if (b.degree == l) return b.multiplicity;
  }
  return 0;
}

std::size_t IrrepsSpec::offset(int l) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (blocks_[i].degree == l) return offsets_[i];
  }
  throw std::out_of_range("IrrepsSpec::offset: degree " + std::to_string(l) + " not present");
}

std::size_t IrrepsSpec::channels() const {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += static_cast<std::size_t>(b.multiplicity);
  return n;
}

std::string IrrepsSpec::str() const {
  std::string out;
  for (const auto& b : blocks_) {
    if (!out.empty()) out += "+";
    out += std::to_string(b.multiplicity) + "x" + std::to_string(b.degree);
  }
  return out;
}

Irrep::Irrep(int l, int h) : degree(l), multiplicity(h), data(static_cast<std::size_t>(h * degree_dim(l)), 0.0) {}

Irrep::Irrep(int l, int h, std::vector<double> values) : degree(l), multiplicity(h), data(std::move(values)) {
  if (data.size() != static_cast<std::size_t>(h * degree_dim(l))) {
    throw std::invalid_argument("Irrep: data length must equal H*(2l+1)");
  }
}

IrrepsArray::IrrepsArray(IrrepsSpec s) : spec(std::move(s)), data(spec.dim(), 0.0) {}

IrrepsArray::IrrepsArray(IrrepsSpec s, std::vector<double> values) : spec(std::move(s)), data(std::move(values)) {
  if (data.size() != spec.dim()) throw std::invalid_argument("IrrepsArray: data does not conform to spec " + spec.str());
}

std::span<double> IrrepsArray::block(int l) {
  return std::span<double>(data).subspan(spec.offset(l), static_cast<std::size_t>(spec.multiplicity(l) * degree_dim(l)));
}

std::span<const double> IrrepsArray::block(int l) const {
  return std::span<const double>(data).subspan(spec.offset(l),
                                               static_cast<std::size_t>(spec.multiplicity(l) * degree_dim(l)));
}

// ---------------------------------------------------------------------------
// Spherical harmonics

namespace {

// Real harmonics of a unit vector for l >= 2, m = -l..l.
void real_harmonics_unit(int l, double x, double y, double z, double* out) {
  // Q_l^m(z) = P_l^m(z) / (1 - z^2)^{m/2}, i.e. the m-th derivative of P_l.
  std::complex<double> power(1.0, 0.0);
  const std::complex<double> xy(x, y);
  double double_factorial = 1.0;  // (2m-1)!!
  for (int m = 0; m <= l; ++m) {
    if (m > 0) double_factorial *= static_cast<double>(2 * m - 1);
    double q_mm = double_factorial;
    double q_value = q_mm;
    if (l > m) {
      double q_prev = q_mm;
      double q_cur = static_cast<double>(2 * m + 1) * z * q_mm;
      for (int ll = m + 2; ll <= l; ++ll) {
        const double next =
            (static_cast<double>(2 * ll - 1) * z * q_cur - static_cast<double>(ll + m - 1) * q_prev) /
            static_cast<double>(ll - m);
        q_prev = q_cur;
        q_cur = next;
      }
      q_value = q_cur;
    }
    double ratio = 1.0;  // (l-m)!/(l+m)!
    for (int k = l - m + 1; k <= l + m; ++k) ratio /= static_cast<double>(k);
    const double norm = std::sqrt(ratio) * (m == 0 ? 1.0 : std::numbers::sqrt2);
    if (m == 0) {
      out[l] = norm * q_value;
    } else {
      out[l + m] = norm * q_value * power.real();
      out[l - m] = norm * q_value * power.imag();
    }
    power *= xy;
  }
}

}  // namespace

void spherical_harmonics_upto(int lmax, const Vec3& r, std::span<double> out) {
  if (lmax < 0) throw std::invalid_argument("spherical_harmonics: negative degree");
  if (out.size() != static_cast<std::size_t>((lmax + 1) * (lmax + 1))) {
    throw std::invalid_argument("spherical_harmonics_upto: output size must be (lmax+1)^2");
  }
  const double n = r.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw DegenerateDirection();
  const double x = r.x() / n;
  const double y = r.y() / n;
  const double z = r.z() / n;
  out[0] = 1.0;
  if (lmax >= 1) {
    out[1] = x;
    out[2] = y;
    out[3] = z;
  }
  for (int l = 2; l <= lmax; ++l) real_harmonics_unit(l, x, y, z, out.data() + l * l);
}

std::vector<double> spherical_harmonics(int l, const Vec3& r) {
  if (l < 0) throw std::invalid_argument("spherical_harmonics: negative degree");
  const double n = r.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw DegenerateDirection();
  std::vector<double> out(static_cast<std::size_t>(degree_dim(l)));
  if (l == 0) {
    out[0] = 1.0;
  } else if (l == 1) {
    out = {r.x() / n, r.y() / n, r.z() / n};
  } else {
    real_harmonics_unit(l, r.x() / n, r.y() / n, r.z() / n, out.data());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rotations and Wigner-D

void check_rotation(const Mat3& R, double tol) {
  if (!R.allFinite()) throw std::invalid_argument("rotation has non-finite entries");
  const double orth = (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (orth > tol) throw std::invalid_argument("matrix is not orthogonal");
  if (std::abs(R.determinant() - 1.0) > 10.0 * tol) throw std::invalid_argument("matrix is not a proper rotation (det != +1)");
}

Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Quaterniond q;
  do {
    q = Eigen::Quaterniond(normal(rng), normal(rng), normal(rng), normal(rng));
  } while (q.norm() < 1e-8);
  q.normalize();
  return q.toRotationMatrix();
}

namespace {

// Least-squares fit of D from harmonics at fixed, well-spread sample points:
// D(R) = Y(R r_k) * pinv(Y(r_k)).
struct WignerFit {
  Eigen::Matrix3Xd points;
  Eigen::MatrixXd pinv;  // M x d
};

const WignerFit& wigner_fit(int l) {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<WignerFit>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[l];
  if (!slot) {
    const int d = degree_dim(l);
    const int m = 3 * d + 2;
    auto fit = std::make_unique<WignerFit>();
    fit->points.resize(3, m);
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int k = 0; k < m; ++k) {
      const double z = 1.0 - (2.0 * k + 1.0) / m;
      const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double phi = golden * k + 0.1234;
      fit->points.col(k) = Vec3(rho * std::cos(phi), rho * std::sin(phi), z);
    }
    Eigen::MatrixXd y(d, m);
    for (int k = 0; k < m; ++k) {
      const auto yk = spherical_harmonics(l, fit->points.col(k));
      for (int i = 0; i < d; ++i) y(i, k) = yk[static_cast<std::size_t>(i)];
    }
    fit->pinv = y.transpose() * (y * y.transpose()).inverse();
    slot = std::move(fit);
  }
  return *slot;
}

}  // namespace

Eigen::MatrixXd wigner_d(int l, const Mat3& R) {
  check_rotation(R);
  if (l < 0) throw std::invalid_argument("wigner_d: negative degree");
  if (l == 0) return Eigen::MatrixXd::Identity(1, 1);
  if (l == 1) return R;
  const auto& fit = wigner_fit(l);
  const int d = degree_dim(l);
  const auto m = fit.points.cols();
  Eigen::MatrixXd y_rot(d, m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const auto yk = spherical_harmonics(l, R * fit.points.col(k));
    for (int i = 0; i < d; ++i) y_rot(i, k) = yk[static_cast<std::size_t>(i)];
  }
  return y_rot * fit.pinv;
}

// ---------------------------------------------------------------------------
// Clebsch-Gordan

bool triangle(int l1, int l2, int l3) {
  return l1 >= 0 && l2 >= 0 && l3 >= 0 && std::abs(l1 - l2) <= l3 && l3 <= l1 + l2;
}

namespace {

// The coupling tensor spans the one-dimensional invariant subspace of
// D1 (x) D2 (x) D3. It is recovered as the null vector of sum_a (K_a - I)^T (K_a - I)
// over two generic rotations.
CgTensor compute_cg(int l1, int l2, int l3) {
  const int d1 = degree_dim(l1), d2 = degree_dim(l2), d3 = degree_dim(l3);
  const int n = d1 * d2 * d3;
  const Mat3 rotations[2] = {
      (Eigen::AngleAxisd(0.7, Vec3(0.3, -0.5, 0.8).normalized())).toRotationMatrix(),
      (Eigen::AngleAxisd(2.1, Vec3(-0.9, 0.2, 0.4).normalized())).toRotationMatrix(),
  };
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
  for (const auto& R : rotations) {
    const Eigen::MatrixXd a = wigner_d(l1, R), b = wigner_d(l2, R), c = wigner_d(l3, R);
    Eigen::MatrixXd k(n, n);
    for (int i1 = 0; i1 < d1; ++i1)
      for (int i2 = 0; i2 < d2; ++i2)
        for (int i3 = 0; i3 < d3; ++i3) {
          const int row = (i1 * d2 + i2) * d3 + i3;
          for (int j1 = 0; j1 < d1; ++j1)
            for (int j2 = 0; j2 < d2; ++j2)
              for (int j3 = 0; j3 < d3; ++j3) {
                k(row, (j1 * d2 + j2) * d3 + j3) = a(i1, j1) * b(i2, j2) * c(i3, j3);
              }
        }
    k -= Eigen::MatrixXd::Identity(n, n);
    gram.noalias() += k.transpose() * k;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
  if (n > 1 && solver.eigenvalues()(1) < 1e-8) {
    throw std::logic_error("clebsch_gordan: invariant subspace is not one-dimensional");
  }
  Eigen::VectorXd v = solver.eigenvectors().col(0);
  v *= std::sqrt(static_cast<double>(d3)) / v.norm();
  const double max_abs = v.cwiseAbs().maxCoeff();
  for (int i = 0; i < n; ++i) {
    if (std::abs(v(i)) >= max_abs - 1e-9) {
      if (v(i) < 0) v = -v;
      break;
    }
  }
  CgTensor t;
  t.l1 = l1;
  t.l2 = l2;
  t.l3 = l3;
  t.dense.assign(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    if (std::abs(v(i)) > 1e-13) t.dense[static_cast<std::size_t>(i)] = v(i);
  }
  return t;
}

void index_nonzero(CgTensor& t) {
  const int d2 = degree_dim(t.l2), d3 = degree_dim(t.l3);
  t.nonzero.clear();
  for (std::size_t i = 0; i < t.dense.size(); ++i) {
    if (t.dense[i] != 0.0) {
      const int idx = static_cast<int>(i);
      t.nonzero.push_back({idx / (d2 * d3), (idx / d3) % d2, idx % d3, t.dense[i]});
    }
  }
  t.by_m3 = t.nonzero;
  std::stable_sort(t.by_m3.begin(), t.by_m3.end(), [](const CgEntry& a, const CgEntry& b) { return a.m3 < b.m3; });
  t.m3_offset.assign(static_cast<std::size_t>(d3 + 1), 0);
  for (const auto& e : t.by_m3) ++t.m3_offset[static_cast<std::size_t>(e.m3 + 1)];
  for (int m = 0; m < d3; ++m) t.m3_offset[static_cast<std::size_t>(m + 1)] += t.m3_offset[static_cast<std::size_t>(m)];
}

bool load_cached(const std::filesystem::path& path, CgTensor& t, std::size_t n) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::vector<double> values(n);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in || in.peek() != std::char_traits<char>::eof()) return false;
  t.dense = std::move(values);
  return true;
}

}  // namespace

const CgTensor& clebsch_gordan(int l1, int l2, int l3) {
  if (!triangle(l1, l2, l3)) {
    throw std::invalid_argument("clebsch_gordan: (" + std::to_string(l1) + "," + std::to_string(l2) + "," +
                                std::to_string(l3) + ") violates the triangle inequality");
  }
  static std::mutex mutex;
  static std::map<std::tuple<int, int, int>, std::unique_ptr<CgTensor>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[{l1, l2, l3}];
  if (slot) return *slot;

  auto t = std::make_unique<CgTensor>();
  const std::size_t n = static_cast<std::size_t>(degree_dim(l1) * degree_dim(l2) * degree_dim(l3));
  std::filesystem::path file;
  if (const char* dir = std::getenv("TENSORJUMP_CACHE"); dir != nullptr && *dir != '\0') {
    file = std::filesystem::path(dir) /
           ("cg_" + std::to_string(l1) + "_" + std::to_string(l2) + "_" + std::to_string(l3) + ".bin");
  }
  bool loaded = false;
  if (!file.empty()) {
    t->l1 = l1;
    t->l2 = l2;
    t->l3 = l3;
    loaded = load_cached(file, *t, n);
  }
  if (!loaded) {
    *t = compute_cg(l1, l2, l3);
    if (!file.empty()) {
      std::error_code ec;
      std::filesystem::create_directories(file.parent_path(), ec);
      std::ofstream out(file, std::ios::binary);
      out.write(reinterpret_cast<const char*>(t->dense.data()), static_cast<std::streamsize>(n * sizeof(double)));
    }
  }
  index_nonzero(*t);
  slot = std::move(t);
  return *slot;
}

// ---------------------------------------------------------------------------
// Feature operations

Irrep tensor_product(const Irrep& a, const Irrep& b, int l_out) {
  const auto& cg = clebsch_gordan(a.degree, b.degree, l_out);
  if (b.multiplicity != a.multiplicity && b.multiplicity != 1) {
    throw std::invalid_argument("tensor_product: multiplicity mismatch (" + std::to_string(a.multiplicity) + " vs " +
                                std::to_string(b.multiplicity) + ")");
  }
  Irrep out(l_out, a.multiplicity);
  for (int c = 0; c < a.multiplicity; ++c) {
    const int cb = b.multiplicity == 1 ? 0 : c;
    for (const auto& e : cg.nonzero) out.at(c, e.m3) += e.value * a.at(c, e.m1) * b.at(cb, e.m2);
  }
  return out;
}

TensorSquarePlan make_square_plan(const IrrepsSpec& input, int lmax_out, bool skip_vanishing) {
  TensorSquarePlan plan;
  plan.input = input;
  const int in_lmax = input.lmax();
  if (lmax_out < 0) lmax_out = std::max(0, 2 * in_lmax);
  std::vector<IrrepBlock> out_blocks;
  for (int lo = 0; lo <= lmax_out; ++lo) {
    int channels = lo <= in_lmax ? input.multiplicity(lo) : 0;
    for (const auto& b1 : input.blocks()) {
      for (const auto& b2 : input.blocks()) {
        if (b2.degree < b1.degree || !triangle(b1.degree, b2.degree, lo)) continue;
        if (skip_vanishing && b1.degree == b2.degree && (2 * b1.degree + lo) % 2 == 1) continue;
        const int h = std::min(b1.multiplicity, b2.multiplicity);
        plan.paths.push_back({b1.degree, b2.degree, lo});
        plan.path_channels.push_back(h);
        plan.path_channel_offset.push_back(channels);
        channels += h;
      }
    }
    if (channels > 0) out_blocks.push_back({lo, channels});
  }
  plan.output = IrrepsSpec(std::move(out_blocks));
  return plan;
}

IrrepsArray tensor_square(const TensorSquarePlan& plan, const IrrepsArray& v) {
  if (!(v.spec == plan.input)) throw std::invalid_argument("tensor_square: input does not match plan spec");
  IrrepsArray out(plan.output);
  for (const auto& b : plan.input.blocks()) {
    if (!plan.output.has(b.degree)) continue;
    const auto src = v.block(b.degree);
    std::copy(src.begin(), src.end(), out.data.begin() + static_cast<std::ptrdiff_t>(plan.output.offset(b.degree)));
  }
  for (std::size_t p = 0; p < plan.paths.size(); ++p) {
    const auto& path = plan.paths[p];
    const auto& cg = clebsch_gordan(path.l1, path.l2, path.l_out);
    const auto a = v.block(path.l1);
    const auto b = v.block(path.l2);
    const int d1 = degree_dim(path.l1), d2 = degree_dim(path.l2), d3 = degree_dim(path.l_out);
    double* dst = out.data.data() + plan.output.offset(path.l_out) +
                  static_cast<std::size_t>(plan.path_channel_offset[p] * d3);
    for (int c = 0; c < plan.path_channels[p]; ++c) {
      for (const auto& e : cg.nonzero) dst[c * d3 + e.m3] += e.value * a[static_cast<std::size_t>(c * d1 + e.m1)] * b[static_cast<std::size_t>(c * d2 + e.m2)];
    }
  }
  return out;
}

IrrepsArray tensor_square(const IrrepsArray& v) { return tensor_square(make_square_plan(v.spec), v); }

IrrepsArray linear_mix(const IrrepsArray& v, const DegreeWeights& weights) {
  if (weights.degrees.size() != weights.matrices.size()) throw std::invalid_argument("linear_mix: malformed weights");
  std::vector<IrrepBlock> blocks;
  for (std::size_t i = 0; i < weights.degrees.size(); ++i) {
    const int l = weights.degrees[i];
    const auto& w = weights.matrices[i];
    const int h_in = v.spec.multiplicity(l);
    if (h_in > 0 && w.cols() != h_in) {
      throw std::invalid_argument("linear_mix: weight for degree " + std::to_string(l) + " has " +
                                  std::to_string(w.cols()) + " columns, input multiplicity is " + std::to_string(h_in));
    }
    if (w.rows() < 1) throw std::invalid_argument("linear_mix: empty output multiplicity");
    blocks.push_back({l, static_cast<int>(w.rows())});
  }
  IrrepsArray out{IrrepsSpec(std::move(blocks))};
  for (std::size_t i = 0; i < weights.degrees.size(); ++i) {
    const int l = weights.degrees[i];
    if (!v.spec.has(l)) continue;
    const int d = degree_dim(l);
    const auto& w = weights.matrices[i];
    const auto src = v.block(l);
    auto dst = out.block(l);
    for (Eigen::Index o = 0; o < w.rows(); ++o)
      for (Eigen::Index c = 0; c < w.cols(); ++c)
        for (int m = 0; m < d; ++m) dst[static_cast<std::size_t>(o * d + m)] += w(o, c) * src[static_cast<std::size_t>(c * d + m)];
  }
  return out;
}

IrrepsArray layer_norm(const IrrepsArray& v, double eps) {
  IrrepsArray out(v.spec);
  for (const auto& b : v.spec.blocks()) {
    const auto src = v.block(b.degree);
    auto dst = out.block(b.degree);
    const double h = static_cast<double>(b.multiplicity);
    if (b.degree == 0) {
      double mean = 0.0;
      for (double x : src) mean += x;
      mean /= h;
      double var = 0.0;
      for (double x : src) var += (x - mean) * (x - mean);
      var /= h;
      const double inv = 1.0 / std::sqrt(var + eps);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] = (src[c] - mean) * inv;
    } else {
      double sq = 0.0;
      for (double x : src) sq += x * x;
      const double inv = 1.0 / std::sqrt(sq / h + eps);
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] * inv;
    }
  }
  return out;
}

void rotate_in_place(const IrrepsSpec& spec, std::span<double> node_data, const Mat3& R) {
  if (node_data.size() != spec.dim()) throw std::invalid_argument("rotate: data does not conform to spec");
  for (const auto& b : spec.blocks()) {
    if (b.degree == 0) continue;
    const Eigen::MatrixXd d = wigner_d(b.degree, R);
    const int n = degree_dim(b.degree);
    double* base = node_data.data() + spec.offset(b.degree);
    for (int c = 0; c < b.multiplicity; ++c) {
      Eigen::Map<Eigen::VectorXd> x(base + c * n, n);
      const Eigen::VectorXd y = d * x;
      x = y;
    }
  }
}

IrrepsArray rotate(const IrrepsArray& v, const Mat3& R) {
  IrrepsArray out = v;
  rotate_in_place(out.spec, out.data, R);
  return out;
}

}  // namespace tensorjump::irreps
