#include "tensorjump/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "tensorjump/log.hpp"

namespace tensorjump::analysis {

void ObservableSeries::validate() const {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw std::invalid_argument("observable " + name + ": non-finite value at frame " + std::to_string(i));
    }
  }
}

Matrix featurize_ca_distances(const Trajectory& traj) {
  const std::size_t n = traj.n_nodes;
  if (n < 2) throw std::invalid_argument("featurize_ca_distances: need at least 2 nodes");
  Matrix out(static_cast<Eigen::Index>(traj.size()), static_cast<Eigen::Index>(n * (n - 1) / 2));
  for (std::size_t f = 0; f < traj.size(); ++f) {
    const auto& x = traj.frames[f];
    Eigen::Index c = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) out(static_cast<Eigen::Index>(f), c++) = (x.position(i) - x.position(j)).norm();
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// TICA

TicaModel tica_fit(const std::vector<Matrix>& features, int lag) {
  if (lag < 1) throw std::invalid_argument("tica_fit: lag must be >= 1");
  if (features.empty()) throw std::invalid_argument("tica_fit: no trajectories");
  const Eigen::Index d = features.front().cols();
  Eigen::Index frames = 0, pairs = 0;
  for (const auto& f : features) {
    if (f.cols() != d) throw std::invalid_argument("tica_fit: feature dimension differs between trajectories");
    frames += f.rows();
    pairs += std::max<Eigen::Index>(0, f.rows() - lag);
  }
  if (pairs == 0) throw std::invalid_argument("tica_fit: lag " + std::to_string(lag) + " >= frames");

  TicaModel model;
  model.lag = lag;
  model.mean = Eigen::VectorXd::Zero(d);
  for (const auto& f : features) model.mean += f.colwise().sum().transpose();
  model.mean /= static_cast<double>(frames);

  Matrix c0 = Matrix::Zero(d, d), ct = Matrix::Zero(d, d);
  for (const auto& f : features) {
    const Matrix x = f.rowwise() - model.mean.transpose();
    c0.noalias() += x.transpose() * x;
    const Eigen::Index m = x.rows() - lag;
    if (m > 0) ct.noalias() += x.topRows(m).transpose() * x.bottomRows(m);
  }
  c0 /= static_cast<double>(frames);
  ct /= static_cast<double>(pairs);
  ct = 0.5 * (ct + ct.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Matrix> c0_eig(c0, Eigen::EigenvaluesOnly);
  const double top = c0_eig.eigenvalues().maxCoeff();
  if (!(c0_eig.eigenvalues().minCoeff() > 1e-12 * top)) {
    const double ridge = 1e-6 * (top > 0.0 ? c0.trace() / static_cast<double>(d) : 1.0);
    log::warn("tica_fit: singular feature covariance, adding ridge " + std::to_string(ridge));
    c0 += ridge * Matrix::Identity(d, d);
  }

  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(ct, c0);
  if (ges.info() != Eigen::Success) throw std::runtime_error("tica_fit: generalized eigensolve failed");
  // Ascending from Eigen; flip to descending.
  model.eigenvalues = ges.eigenvalues().reverse();
  model.components = ges.eigenvectors().rowwise().reverse();
  for (Eigen::Index c = 0; c < d; ++c) {
    Eigen::Index at = 0;
    model.components.col(c).cwiseAbs().maxCoeff(&at);
    if (model.components(at, c) < 0.0) model.components.col(c) *= -1.0;
    // The symmetrized estimator bounds |lambda| by 1 up to round-off.
    model.eigenvalues(c) = std::clamp(model.eigenvalues(c), -1.0, 1.0);
  }
  return model;
}

TicaModel tica_fit(const Matrix& features, int lag) { return tica_fit(std::vector<Matrix>{features}, lag); }

Matrix tica_project(const TicaModel& model, const Matrix& features, int n_components) {
  if (features.cols() != model.dim()) {
    throw std::invalid_argument("tica_project: feature dimension " + std::to_string(features.cols()) +
                                " != model dimension " + std::to_string(model.dim()));
  }
  const int n = n_components < 0 ? model.dim() : std::min(n_components, model.dim());
  return (features.rowwise() - model.mean.transpose()) * model.components.leftCols(n);
}

// ---------------------------------------------------------------------------
// k-means

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double sqdist(const double* a, const double* b, Eigen::Index d) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double t = a[i] - b[i];
    s += t * t;
  }
  return s;
}

// Nearest center per point (ties -> lowest index); returns the inertia.
double assign(const RowMatrix& centers, const RowMatrix& pts, std::vector<int>& labels, std::vector<double>& d2) {
  const Eigen::Index n = pts.rows(), k = centers.rows(), d = pts.cols();
  labels.resize(static_cast<std::size_t>(n));
  d2.resize(static_cast<std::size_t>(n));
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (Eigen::Index c = 0; c < k; ++c) {
      const double s = sqdist(pts.row(i).data(), centers.row(c).data(), d);
      if (s < best) {
        best = s;
        arg = static_cast<int>(c);
      }
    }
    labels[static_cast<std::size_t>(i)] = arg;
    d2[static_cast<std::size_t>(i)] = best;
    inertia += best;
  }
  return inertia;
}

}  // namespace

std::vector<int> assign_clusters(const Matrix& centers, const Matrix& points) {
  if (centers.cols() != points.cols()) throw std::invalid_argument("assign_clusters: dimension mismatch");
  if (centers.rows() == 0) throw std::invalid_argument("assign_clusters: no centers");
  std::vector<int> labels;
  std::vector<double> d2;
  assign(centers, points, labels, d2);
  return labels;
}

KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed) {
  const Eigen::Index n = points.rows(), d = points.cols();
  if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
  if (k > n) throw std::invalid_argument("kmeans: k = " + std::to_string(k) + " > " + std::to_string(n) + " points");
  const RowMatrix pts = points;
  std::mt19937_64 rng(seed);

  RowMatrix centers(k, d);
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::size_t pick = std::uniform_int_distribution<std::size_t>(0, static_cast<std::size_t>(n) - 1)(rng);
  for (int c = 0; c < k; ++c) {
    if (c > 0) {
      const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
      if (total > 0.0) {
        pick = std::discrete_distribution<std::size_t>(d2.begin(), d2.end())(rng);
      } else {
        pick = static_cast<std::size_t>(c);  // fewer distinct points than k
      }
    }
    centers.row(c) = pts.row(static_cast<Eigen::Index>(pick));
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& v = d2[static_cast<std::size_t>(i)];
      v = std::min(v, sqdist(pts.row(i).data(), centers.row(c).data(), d));
    }
  }

  KMeansResult out;
  double inertia = assign(centers, pts, out.labels, d2);
  for (int it = 1; it <= 500; ++it) {
    out.iterations = it;
    RowMatrix sums = RowMatrix::Zero(k, d);
    std::vector<long> sizes(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = out.labels[static_cast<std::size_t>(i)];
      sums.row(c) += pts.row(i);
      ++sizes[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < k; ++c) {
      if (sizes[static_cast<std::size_t>(c)] > 0) {
        centers.row(c) = sums.row(c) / static_cast<double>(sizes[static_cast<std::size_t>(c)]);
      } else {
        // Empty cluster: restart it at the worst-fit point.
        const auto far = static_cast<Eigen::Index>(std::max_element(d2.begin(), d2.end()) - d2.begin());
        centers.row(c) = pts.row(far);
        d2[static_cast<std::size_t>(far)] = 0.0;
      }
    }
    const double next = assign(centers, pts, out.labels, d2);
    const double change = std::abs(inertia - next) / std::max(inertia, std::numeric_limits<double>::min());
    inertia = next;
    if (inertia == 0.0 || change < 1e-6) break;
  }
  out.centers = centers;
  out.inertia = inertia;
  return out;
}

// ---------------------------------------------------------------------------
// Markov state models

Eigen::VectorXd stationary_distribution(const Matrix& transition) {
  const Eigen::Index n = transition.rows();
  if (n == 0 || transition.cols() != n) throw std::invalid_argument("stationary_distribution: need a square matrix");
  // pi (T - I) = 0 with one equation replaced by sum(pi) = 1.
  Matrix a = transition.transpose() - Matrix::Identity(n, n);
  a.row(n - 1).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  b(n - 1) = 1.0;
  Eigen::FullPivLU<Matrix> lu(a);
  if (!lu.isInvertible()) throw std::invalid_argument("stationary_distribution: chain is not irreducible");
  Eigen::VectorXd pi = lu.solve(b);
  pi = pi.cwiseMax(0.0);
  return pi / pi.sum();
}

namespace {

// Tarjan's strongly connected components over the count graph.
std::vector<std::vector<int>> strongly_connected(const Matrix& counts, const std::vector<bool>& visited) {
  const int n = static_cast<int>(counts.rows());
  std::vector<int> index(static_cast<std::size_t>(n), -1), low(static_cast<std::size_t>(n), 0);
  std::vector<bool> on_stack(static_cast<std::size_t>(n), false);
  std::vector<int> stack;
  std::vector<std::vector<int>> out;
  int counter = 0;
  std::function<void(int)> visit = [&](int v) {
    const auto sv = static_cast<std::size_t>(v);
    index[sv] = low[sv] = counter++;
    stack.push_back(v);
    on_stack[sv] = true;
    for (int w = 0; w < n; ++w) {
      if (counts(v, w) <= 0.0 || !visited[static_cast<std::size_t>(w)]) continue;
      const auto sw = static_cast<std::size_t>(w);
      if (index[sw] < 0) {
        visit(w);
        low[sv] = std::min(low[sv], low[sw]);
      } else if (on_stack[sw]) {
        low[sv] = std::min(low[sv], index[sw]);
      }
    }
    if (low[sv] == index[sv]) {
      std::vector<int> comp;
      int w = -1;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[static_cast<std::size_t>(w)] = false;
        comp.push_back(w);
      } while (w != v);
      std::sort(comp.begin(), comp.end());
      out.push_back(std::move(comp));
    }
  };
  for (int v = 0; v < n; ++v) {
    if (visited[static_cast<std::size_t>(v)] && index[static_cast<std::size_t>(v)] < 0) visit(v);
  }
  return out;
}

}  // namespace

MsmModel msm_estimate(const std::vector<std::vector<int>>& labels, int lag, int n_states) {
  if (lag < 1) throw std::invalid_argument("msm_estimate: lag must be >= 1");
  if (n_states < 1) throw std::invalid_argument("msm_estimate: n_states must be >= 1");
  Matrix counts = Matrix::Zero(n_states, n_states);
  std::vector<bool> visited(static_cast<std::size_t>(n_states), false);
  std::size_t transitions = 0;
  for (const auto& traj : labels) {
    for (int s : traj) {
      if (s < 0 || s >= n_states) throw std::invalid_argument("msm_estimate: label " + std::to_string(s) + " out of range");
    }
    for (std::size_t t = 0; t + static_cast<std::size_t>(lag) < traj.size(); ++t) {
      const int i = traj[t], j = traj[t + static_cast<std::size_t>(lag)];
      counts(i, j) += 1.0;
      visited[static_cast<std::size_t>(i)] = visited[static_cast<std::size_t>(j)] = true;
      ++transitions;
    }
  }
  if (transitions == 0) throw std::invalid_argument("msm_estimate: no transitions at lag " + std::to_string(lag));

  auto comps = strongly_connected(counts, visited);
  auto weight = [&](const std::vector<int>& c) {
    double w = 0.0;
    for (int i : c) w += counts.row(i).sum();
    return w;
  };
  const auto best = std::max_element(comps.begin(), comps.end(), [&](const auto& a, const auto& b) {
    return a.size() != b.size() ? a.size() < b.size() : weight(a) < weight(b);
  });
  if (comps.size() > 1) {
    log::warn("msm_estimate: count graph has " + std::to_string(comps.size()) +
              " connected sets; restricting to the largest (" + std::to_string(best->size()) + " states)");
  }

  MsmModel m;
  m.n_states = n_states;
  m.lag = lag;
  m.active = *best;
  m.transition = Matrix::Identity(n_states, n_states);  // inactive / empty rows stay self-loops
  m.pi = Eigen::VectorXd::Zero(n_states);
  const auto na = static_cast<Eigen::Index>(m.active.size());
  Matrix sub(na, na);
  for (Eigen::Index a = 0; a < na; ++a) {
    for (Eigen::Index b = 0; b < na; ++b) sub(a, b) = counts(m.active[static_cast<std::size_t>(a)], m.active[static_cast<std::size_t>(b)]);
    const double row = sub.row(a).sum();
    if (row > 0.0) {
      sub.row(a) /= row;
    } else {
      sub.row(a).setZero();
      sub(a, a) = 1.0;
    }
  }
  const Eigen::VectorXd pi = stationary_distribution(sub);
  for (Eigen::Index a = 0; a < na; ++a) {
    const int i = m.active[static_cast<std::size_t>(a)];
    m.pi(i) = pi(a);
    m.transition.row(i).setZero();
    for (Eigen::Index b = 0; b < na; ++b) m.transition(i, m.active[static_cast<std::size_t>(b)]) = sub(a, b);
  }
  return m;
}

MsmModel msm_estimate(const std::vector<int>& labels, int lag, int n_states) {
  return msm_estimate(std::vector<std::vector<int>>{labels}, lag, n_states);
}

// ---------------------------------------------------------------------------
// Histograms and weights

std::vector<double> uniform_edges(double lo, double hi, int bins) {
  if (bins < 1 || !(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw std::invalid_argument("uniform_edges: need bins >= 1 and finite lo < hi");
  }
  std::vector<double> e(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i) e[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / bins;
  e.back() = hi;
  return e;
}

std::vector<double> shared_edges(const std::vector<double>& a, const std::vector<double>& b, int bins) {
  if (a.empty() && b.empty()) throw std::invalid_argument("shared_edges: no values");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto* v : {&a, &b}) {
    for (double x : *v) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  }
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  return uniform_edges(lo, hi, bins);
}

namespace {

std::size_t bin_of(const std::vector<double>& edges, double v) {
  const auto it = std::upper_bound(edges.begin(), edges.end(), v);
  const auto i = static_cast<std::ptrdiff_t>(it - edges.begin()) - 1;
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(edges.size()) - 2));
}

std::vector<double> counts(const std::vector<double>& values, const std::vector<double>& edges) {
  std::vector<double> c(edges.size() - 1, 0.0);
  for (double v : values) c[bin_of(edges, v)] += 1.0;
  return c;
}

}  // namespace

Histogram histogram(const std::vector<double>& values, const std::vector<double>& edges,
                    const std::vector<double>& weights) {
  if (edges.size() < 2 || !std::is_sorted(edges.begin(), edges.end())) {
    throw std::invalid_argument("histogram: need >= 2 sorted edges");
  }
  if (!weights.empty() && weights.size() != values.size()) throw std::invalid_argument("histogram: weight count mismatch");
  Histogram h;
  h.edges = edges;
  h.density.assign(edges.size() - 1, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    if (!(w >= 0.0) || !std::isfinite(values[i])) throw std::invalid_argument("histogram: bad value or weight");
    h.density[bin_of(edges, values[i])] += w;
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("histogram: total weight is zero");
  for (double& d : h.density) d /= total;
  return h;
}

Histogram reweight_histogram(const ObservableSeries& values, const std::vector<int>& labels, const MsmModel& msm,
                             const std::vector<double>& edges) {
  values.validate();
  if (labels.size() != values.values.size()) throw std::invalid_argument("reweight_histogram: labels do not align with values");
  std::vector<double> count(static_cast<std::size_t>(msm.n_states), 0.0);
  for (int s : labels) {
    if (s < 0 || s >= msm.n_states) throw std::invalid_argument("reweight_histogram: label out of range");
    count[static_cast<std::size_t>(s)] += 1.0;
  }
  double lost = 0.0;
  for (int s = 0; s < msm.n_states; ++s) {
    if (count[static_cast<std::size_t>(s)] == 0.0) lost += msm.pi(s);
  }
  if (lost > 0.0) {
    log::warn("reweight_histogram: clusters without frames carry " + std::to_string(lost) +
              " of the stationary mass; redistributing proportionally");
  }
  std::vector<double> w(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto s = static_cast<std::size_t>(labels[i]);
    w[i] = msm.pi(labels[i]) / count[s];
  }
  return histogram(values.values, edges, w);
}

std::vector<double> cluster_weights(const std::vector<int>& labels, int k) {
  if (k < 1) throw std::invalid_argument("cluster_weights: k must be >= 1");
  std::vector<double> size(static_cast<std::size_t>(k), 0.0);
  for (int c : labels) {
    if (c < 0 || c >= k) throw std::invalid_argument("cluster_weights: label out of range");
    size[static_cast<std::size_t>(c)] += 1.0;
  }
  const auto occupied = static_cast<double>(std::count_if(size.begin(), size.end(), [](double s) { return s > 0.0; }));
  std::vector<double> w(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) w[i] = 1.0 / (occupied * size[static_cast<std::size_t>(labels[i])]);
  return w;
}

std::vector<double> cluster_weights_for_training(const Matrix& tic_points, int k, std::uint64_t seed) {
  return cluster_weights(kmeans(tic_points, k, seed).labels, k);
}

// ---------------------------------------------------------------------------
// Structural observables

Alignment kabsch_align(const std::vector<Vec3>& mobile, const std::vector<Vec3>& reference) {
  if (mobile.size() != reference.size()) throw std::invalid_argument("kabsch_align: point counts differ");
  if (mobile.size() < 3) throw std::invalid_argument("kabsch_align: need at least 3 points");
  Vec3 cm = Vec3::Zero(), cr = Vec3::Zero();
  for (std::size_t i = 0; i < mobile.size(); ++i) {
    cm += mobile[i];
    cr += reference[i];
  }
  cm /= static_cast<double>(mobile.size());
  cr /= static_cast<double>(mobile.size());
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < mobile.size(); ++i) h += (mobile[i] - cm) * (reference[i] - cr).transpose();
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 s = svd.singularValues();
  if (!(s(1) > 1e-10 * s(0))) throw std::invalid_argument("kabsch_align: rank-deficient covariance (collinear points)");
  Mat3 fix = Mat3::Identity();
  fix(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  Alignment a;
  a.rotation = svd.matrixV() * fix * svd.matrixU().transpose();
  a.translation = cr - a.rotation * cm;
  a.aligned.reserve(mobile.size());
  for (const auto& p : mobile) a.aligned.push_back(a.rotation * p + a.translation);
  return a;
}

double rmsd(const std::vector<Vec3>& aligned, const std::vector<Vec3>& reference) {
  if (aligned.size() != reference.size() || aligned.empty()) throw std::invalid_argument("rmsd: need equal non-zero counts");
  double s = 0.0;
  for (std::size_t i = 0; i < aligned.size(); ++i) s += (aligned[i] - reference[i]).squaredNorm();
  return std::sqrt(s / static_cast<double>(aligned.size()));
}

double gdt(const std::vector<Vec3>& aligned, const std::vector<Vec3>& reference) {
  if (aligned.size() != reference.size() || aligned.empty()) throw std::invalid_argument("gdt: need equal non-zero counts");
  double score = 0.0;
  for (double cut : {1.0, 2.0, 4.0, 8.0}) {
    std::size_t within = 0;
    for (std::size_t i = 0; i < aligned.size(); ++i) within += (aligned[i] - reference[i]).norm() <= cut;
    score += static_cast<double>(within) / static_cast<double>(aligned.size());
  }
  return score / 4.0;
}

double radius_of_gyration(const std::vector<Vec3>& coords, const std::vector<double>& masses) {
  if (!masses.empty() && masses.size() != coords.size()) throw std::invalid_argument("radius_of_gyration: mass count mismatch");
  auto mass = [&](std::size_t i) { return masses.empty() ? 1.0 : masses[i]; };
  double total = 0.0;
  Vec3 com = Vec3::Zero();
  for (std::size_t i = 0; i < coords.size(); ++i) {
    total += mass(i);
    com += mass(i) * coords[i];
  }
  if (!(total > 0.0)) throw std::invalid_argument("radius_of_gyration: total mass must be positive");
  com /= total;
  double s = 0.0;
  for (std::size_t i = 0; i < coords.size(); ++i) s += mass(i) * (coords[i] - com).squaredNorm();
  return std::sqrt(s / total);
}

double fraction_native_contacts(const std::vector<Vec3>& coords, const std::vector<Vec3>& reference, double cutoff,
                                int min_seq_sep) {
  if (coords.size() != reference.size()) throw std::invalid_argument("fraction_native_contacts: residue counts differ");
  std::size_t native = 0, kept = 0;
  const auto sep = static_cast<std::size_t>(std::max(min_seq_sep, 1));
  for (std::size_t i = 0; i < reference.size(); ++i) {
    for (std::size_t j = i + sep; j < reference.size(); ++j) {
      if ((reference[i] - reference[j]).norm() > cutoff) continue;
      ++native;
      kept += (coords[i] - coords[j]).norm() <= cutoff;
    }
  }
  if (native == 0) throw std::invalid_argument("fraction_native_contacts: reference has no native contacts");
  return static_cast<double>(kept) / static_cast<double>(native);
}

// ---------------------------------------------------------------------------
// Divergences and free energies

double js_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size() || p.empty()) throw std::invalid_argument("js_divergence: densities need a common non-empty binning");
  for (const auto* d : {&p, &q}) {
    double s = 0.0;
    for (double v : *d) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("js_divergence: negative or non-finite density");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-6) throw std::invalid_argument("js_divergence: density sums to " + std::to_string(s) + ", not 1");
  }
  double js = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) js += 0.5 * p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) js += 0.5 * q[i] * std::log(q[i] / m);
  }
  return std::max(js, 0.0);
}

std::vector<double> free_energy(const std::vector<double>& density, double kT) {
  double top = 0.0;
  for (double v : density) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("free_energy: negative or non-finite density");
    top = std::max(top, v);
  }
  if (!(top > 0.0)) throw std::invalid_argument("free_energy: density is empty");
  std::vector<double> f(density.size());
  for (std::size_t i = 0; i < density.size(); ++i) f[i] = density[i] > 0.0 ? -kT * std::log(density[i] / top) : kEmptyBin;
  return f;
}

// ---------------------------------------------------------------------------
// Chemistry

ChemistryReport chemistry_report(const protein::Coordinates& coords, const protein::Topology& topology,
                                 const ChemistryOptions& options) {
  const auto g = protein::atom_graph(topology, coords);
  const std::size_t n = g.positions.size();
  std::vector<std::vector<int>> adj(n);
  for (const auto& [u, v] : g.bonds) {
    adj[static_cast<std::size_t>(u)].push_back(v);
    adj[static_cast<std::size_t>(v)].push_back(u);
  }

  ChemistryReport r;
  r.bond_edges = options.bond_edges;
  r.angle_edges = options.angle_edges;
  std::vector<double> lengths, angles;
  for (const auto& [u, v] : g.bonds) {
    lengths.push_back((g.positions[static_cast<std::size_t>(u)] - g.positions[static_cast<std::size_t>(v)]).norm());
  }
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t a = 0; a < adj[c].size(); ++a) {
      for (std::size_t b = a + 1; b < adj[c].size(); ++b) {
        const Vec3 u = g.positions[static_cast<std::size_t>(adj[c][a])] - g.positions[c];
        const Vec3 v = g.positions[static_cast<std::size_t>(adj[c][b])] - g.positions[c];
        const double cosine = std::clamp(u.dot(v) / (u.norm() * v.norm()), -1.0, 1.0);
        angles.push_back(std::acos(cosine) * 180.0 / M_PI);
      }
    }
  }
  r.bond_counts = counts(lengths, r.bond_edges);
  r.angle_counts = counts(angles, r.angle_edges);
  r.bonds = lengths.size();
  r.angles = angles.size();

  const auto& radii = protein::VdwRadii::standard();
  std::vector<double> radius(n);
  for (std::size_t i = 0; i < n; ++i) radius[i] = radii.radius(g.elements[i]);
  std::vector<int> depth(n, -1);
  std::vector<int> touched;
  for (std::size_t i = 0; i < n; ++i) {
    // Breadth-first search marks atoms within exclude_bonds of i.
    touched.assign(1, static_cast<int>(i));
    depth[i] = 0;
    for (std::size_t head = 0; head < touched.size(); ++head) {
      const int u = touched[head];
      if (depth[static_cast<std::size_t>(u)] == options.exclude_bonds) continue;
      for (int w : adj[static_cast<std::size_t>(u)]) {
        if (depth[static_cast<std::size_t>(w)] >= 0) continue;
        depth[static_cast<std::size_t>(w)] = depth[static_cast<std::size_t>(u)] + 1;
        touched.push_back(w);
      }
    }
    for (std::size_t j = i + 1; j < n; ++j) {
      if (depth[j] >= 0) continue;
      const double limit = radius[i] + radius[j] - options.clash_tolerance;
      r.clashes += (g.positions[i] - g.positions[j]).norm() < limit;
    }
    for (int u : touched) depth[static_cast<std::size_t>(u)] = -1;
  }
  return r;
}

}  // namespace tensorjump::analysis
