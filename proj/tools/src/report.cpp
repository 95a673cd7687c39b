#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "tensorjump/log.hpp"
#include "tensorjump/protein.hpp"
#include "tensorjump_cli/commands.hpp"

namespace tensorjump::cli {

namespace fs = std::filesystem;
namespace an = tensorjump::analysis;

namespace {

void write_text(const std::string& path, const std::string& text) {
  io::write_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<Vec3> node_positions(const TensorCloud& c) {
  std::vector<Vec3> out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = c.position(i);
  return out;
}

std::string fixed(double x, int width = 12) {
  char buf[64];
  if (std::isfinite(x)) {
    std::snprintf(buf, sizeof(buf), "%*.4f", width, x);
  } else {
    std::snprintf(buf, sizeof(buf), "%*s", width, "inf");
  }
  return buf;
}

std::string padded(const std::string& s, int width) {
  return s.size() >= static_cast<std::size_t>(width) ? s + " " : s + std::string(width - s.size(), ' ');
}

std::string rpadded(const std::string& s, int width) {
  return s.size() >= static_cast<std::size_t>(width) ? " " + s : std::string(width - s.size(), ' ') + s;
}

// Observable series per trajectory; empty optional when not computable.
struct Series {
  std::string name;
  std::string reason;
  std::vector<double> reference;
  std::vector<std::vector<double>> samples;
};

using Extract = std::function<double(const TensorCloud&)>;

std::vector<double> over_frames(const Trajectory& t, const Extract& f) {
  std::vector<double> out;
  out.reserve(t.size());
  for (const auto& c : t.frames) out.push_back(f(c));
  return out;
}

std::vector<double> column(const an::Matrix& m, Eigen::Index c) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = m(i, c);
  return out;
}

bool all_finite(const Trajectory& t) {
  for (const auto& f : t.frames) {
    for (double x : f.positions()) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

std::string chemistry_block(const Trajectory& reference, const std::vector<Trajectory>& samples,
                            const std::vector<std::string>& names) {
  if (!(reference.spec == protein::slot_spec())) {
    return "chemistry: n/a (trajectories do not carry atom offsets)\n";
  }
  protein::Topology top;
  for (int l : reference.labels) {
    if (l < 0) return "chemistry: n/a (residue labels missing)\n";
    top.labels.push_back(l);
  }
  std::ostringstream out;
  out << padded("trajectory", 24) << rpadded("frames", 8) << rpadded("bonds/frame", 14) << rpadded("angles/frame", 14)
      << rpadded("clashes/frame", 15) << "\n";
  auto one = [&](const std::string& name, const Trajectory& t) {
    const std::size_t n = t.size();
    const std::size_t stride = std::max<std::size_t>(1, n / 200);
    std::size_t frames = 0, bonds = 0, angles = 0, clashes = 0;
    for (std::size_t f = 0; f < n; f += stride) {
      const auto r = an::chemistry_report(protein::decode(t.frames[f], top), top);
      bonds += r.bonds;
      angles += r.angles;
      clashes += r.clashes;
      ++frames;
    }
    const double d = std::max<double>(1.0, static_cast<double>(frames));
    char buf[200];
    std::snprintf(buf, sizeof(buf), "%8zu%14.2f%14.2f%15.3f\n", frames, bonds / d, angles / d, clashes / d);
    out << padded(name, 24) << buf;
  };
  one("reference", reference);
  for (std::size_t s = 0; s < samples.size(); ++s) one(names[s], samples[s]);
  return out.str();
}

}  // namespace

an::Matrix features(const Trajectory& traj) {
  if (traj.n_nodes >= 2) return an::featurize_ca_distances(traj);
  an::Matrix m(static_cast<Eigen::Index>(traj.size()), 3);
  for (std::size_t f = 0; f < traj.size(); ++f) m.row(static_cast<Eigen::Index>(f)) = traj.frames[f].position(0);
  return m;
}

const JsRow& AnalysisReport::row(const std::string& observable) const {
  for (const auto& r : rows) {
    if (r.observable == observable) return r;
  }
  throw std::out_of_range("no observable " + observable + " in report");
}

std::string AnalysisReport::table() const {
  std::ostringstream out;
  out << padded("observable", 12);
  for (const auto& s : samples) out << rpadded(s, 16) << rpadded(s + ":raw", 16);
  out << "\n";
  for (const auto& r : rows) {
    out << padded(r.observable, 12);
    for (std::size_t s = 0; s < samples.size(); ++s) {
      if (!r.available) {
        out << rpadded("n/a", 16) << rpadded("n/a", 16);
      } else {
        out << fixed(r.js[s], 16) << fixed(r.js_raw[s], 16);
      }
    }
    if (!r.available) out << "  (" << r.reason << ")";
    out << "\n";
  }
  return out.str();
}

AnalysisReport analyze(const Trajectory& reference, const std::vector<Trajectory>& samples,
                       const std::vector<std::string>& names, const std::optional<TensorCloud>& native,
                       const AnalysisSection& options) {
  if (names.size() != samples.size()) throw std::invalid_argument("analyze: one name per sample");
  if (reference.size() < 2) throw std::invalid_argument("analyze: the reference needs at least 2 frames");
  for (std::size_t s = 0; s < samples.size(); ++s) {
    if (samples[s].n_nodes != reference.n_nodes) {
      throw std::invalid_argument("analyze: " + names[s] + " has " + std::to_string(samples[s].n_nodes) +
                                  " nodes, the reference " + std::to_string(reference.n_nodes));
    }
  }
  if (native && native->size() != reference.n_nodes) {
    throw std::invalid_argument("analyze: native structure has " + std::to_string(native->size()) + " nodes");
  }

  // A sample is usable when it has frames enough for a histogram and no
  // non-finite coordinates.
  std::vector<bool> usable(samples.size());
  for (std::size_t s = 0; s < samples.size(); ++s) usable[s] = samples[s].size() >= 2 && all_finite(samples[s]);

  const auto ref_feat = features(reference);
  const auto tica = an::tica_fit(ref_feat, options.tica_lag);
  const int tics = std::min(2, tica.dim());
  const int dims = std::min(options.tica_dims, tica.dim());
  const auto ref_proj = an::tica_project(tica, ref_feat, std::max(tics, dims));
  std::vector<an::Matrix> proj(samples.size());
  for (std::size_t s = 0; s < samples.size(); ++s) {
    if (usable[s]) proj[s] = an::tica_project(tica, features(samples[s]), std::max(tics, dims));
  }

  std::vector<Series> series;
  for (int c = 0; c < 2; ++c) {
    Series x{"TIC" + std::to_string(c + 1), "", {}, std::vector<std::vector<double>>(samples.size())};
    if (c < tics) {
      x.reference = column(ref_proj, c);
      for (std::size_t s = 0; s < samples.size(); ++s) {
        if (usable[s]) x.samples[s] = column(proj[s], c);
      }
    } else {
      x.reason = "only one feature";
    }
    series.push_back(std::move(x));
  }

  auto structural = [&](const std::string& name, const Extract& f) {
    Series x{name, "", {}, std::vector<std::vector<double>>(samples.size())};
    try {
      x.reference = over_frames(reference, f);
      for (std::size_t s = 0; s < samples.size(); ++s) {
        if (usable[s]) x.samples[s] = over_frames(samples[s], f);
      }
    } catch (const std::exception& e) {
      x.reference.clear();
      x.reason = e.what();
    }
    return x;
  };
  if (native) {
    const auto ref_pos = node_positions(*native);
    series.push_back(structural("RMSD", [&](const TensorCloud& c) {
      return an::rmsd(an::kabsch_align(node_positions(c), ref_pos).aligned, ref_pos);
    }));
    series.push_back(structural("GDT", [&](const TensorCloud& c) {
      return an::gdt(an::kabsch_align(node_positions(c), ref_pos).aligned, ref_pos);
    }));
    series.push_back(structural("RG", [](const TensorCloud& c) { return an::radius_of_gyration(node_positions(c)); }));
    series.push_back(structural(
        "FNC", [&](const TensorCloud& c) { return an::fraction_native_contacts(node_positions(c), ref_pos); }));
  } else {
    for (const char* name : {"RMSD", "GDT"}) series.push_back({name, "no native structure", {}, {}});
    series.push_back(structural("RG", [](const TensorCloud& c) { return an::radius_of_gyration(node_positions(c)); }));
    series.push_back({"FNC", "no native structure", {}, {}});
  }

  // MSM per sample for reweighting.
  std::vector<std::optional<an::MsmModel>> msm(samples.size());
  std::vector<std::vector<int>> clusters(samples.size());
  if (options.reweight) {
    for (std::size_t s = 0; s < samples.size(); ++s) {
      const auto n = proj[s].rows();
      if (!usable[s] || n <= options.msm_lag + 1) continue;
      const int k = std::max(1, std::min<int>(options.clusters, static_cast<int>(n / 10)));
      const auto km = an::kmeans(proj[s].leftCols(dims), k, options.seed);
      clusters[s] = km.labels;
      msm[s] = an::msm_estimate(km.labels, options.msm_lag, k);
    }
  }

  AnalysisReport report;
  report.samples = names;
  for (const auto& x : series) {
    JsRow row;
    row.observable = x.name;
    if (x.reference.empty()) {
      row.available = false;
      row.reason = x.reason;
      report.rows.push_back(std::move(row));
      continue;
    }
    // Common bins for the free-energy curves.
    std::vector<double> pooled = x.reference;
    for (const auto& v : x.samples) pooled.insert(pooled.end(), v.begin(), v.end());
    const auto common = an::shared_edges(x.reference, pooled, options.bins);
    FreeEnergyCurve fe;
    fe.observable = x.name;
    for (std::size_t b = 0; b + 1 < common.size(); ++b) fe.centers.push_back(0.5 * (common[b] + common[b + 1]));
    fe.reference = an::free_energy(an::histogram(x.reference, common).density, options.kT);

    for (std::size_t s = 0; s < samples.size(); ++s) {
      if (!usable[s]) {
        row.js.push_back(kDivergedJs);
        row.js_raw.push_back(kDivergedJs);
        fe.samples.emplace_back(fe.centers.size(), an::kEmptyBin);
        continue;
      }
      const auto& v = x.samples[s];
      const auto edges = an::shared_edges(x.reference, v, options.bins);
      const auto ref_h = an::histogram(x.reference, edges);
      const auto raw = an::histogram(v, edges);
      row.js_raw.push_back(an::js_divergence(ref_h.density, raw.density));
      if (msm[s]) {
        const an::ObservableSeries obs{x.name, v, ""};
        row.js.push_back(an::js_divergence(ref_h.density, an::reweight_histogram(obs, clusters[s], *msm[s], edges).density));
        fe.samples.push_back(
            an::free_energy(an::reweight_histogram(obs, clusters[s], *msm[s], common).density, options.kT));
      } else {
        row.js.push_back(row.js_raw.back());
        fe.samples.push_back(an::free_energy(an::histogram(v, common).density, options.kT));
      }
    }
    report.rows.push_back(std::move(row));
    report.free_energy.push_back(std::move(fe));
  }
  report.chemistry = chemistry_block(reference, samples, names);
  return report;
}

AnalysisReport cmd_analyze(const RunConfig& config) {
  config.validate();
  const auto ref_path = config.analysis.reference.empty() ? trajectory_file(config.data_dir(), 0)
                                                          : config.resolve(config.analysis.reference);
  const auto reference = io::read_tct(ref_path);
  std::vector<std::string> paths = config.analysis.samples;
  if (paths.empty()) paths.push_back(config.sample.out);
  std::vector<Trajectory> samples;
  std::vector<std::string> names;
  for (const auto& p : paths) {
    samples.push_back(io::read_tct(config.resolve(p)));
    names.push_back(fs::path(p).filename().string());
  }
  std::optional<TensorCloud> native;
  if (!config.analysis.native.empty()) {
    const auto t = io::read_tct(config.resolve(config.analysis.native));
    if (t.size() == 0) throw std::invalid_argument("analyze: native structure file has no frames");
    native = t.frames.front();
  }
  auto report = analyze(reference, samples, names, native, config.analysis);

  const fs::path dir = config.resolve(config.analysis.out_dir);
  write_text((dir / "js.txt").string(), report.table());
  for (const auto& fe : report.free_energy) {
    std::ostringstream csv;
    csv << "center,reference";
    for (const auto& n : names) csv << "," << n;
    csv << "\n";
    for (std::size_t b = 0; b < fe.centers.size(); ++b) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.6g", fe.centers[b]);
      csv << buf;
      auto put = [&](double f) {
        if (std::isfinite(f)) {
          std::snprintf(buf, sizeof(buf), ",%.6g", f);
          csv << buf;
        } else {
          csv << ",inf";
        }
      };
      put(fe.reference[b]);
      for (const auto& s : fe.samples) put(s[b]);
      csv << "\n";
    }
    write_text((dir / ("free_energy_" + fe.observable + ".csv")).string(), csv.str());
  }
  write_text((dir / "chemistry.txt").string(), report.chemistry);
  return report;
}

// ---------------------------------------------------------------------------
// compare-transports

std::string CompareReport::table() const {
  std::ostringstream out;
  if (cells.empty()) return "no runs\n";
  out << padded("schedule", 16) << rpadded("sigma2_p", 10);
  for (const auto& r : cells.front().rows) out << rpadded(r.observable, 10);
  out << "  status\n";
  for (const auto& c : cells) {
    char s[32];
    std::snprintf(s, sizeof(s), "%10.3g", c.sigma2_p);
    out << padded(transport::to_string(c.kind), 16) << s;
    for (const auto& r : c.rows) out << (r.available ? fixed(r.js.front(), 10) : rpadded("n/a", 10));
    out << "  " << c.status << "\n";
  }
  return out.str();
}

CompareReport cmd_compare_transports(const RunConfig& config, std::optional<transport::Kind> only) {
  config.validate();
  const auto reference = io::read_tct(config.analysis.reference.empty() ? trajectory_file(config.data_dir(), 0)
                                                                        : config.resolve(config.analysis.reference));
  const auto start = io::read_tct(config.sample.start.empty() ? trajectory_file(config.data_dir(), 0)
                                                              : config.resolve(config.sample.start));
  const fs::path dir = fs::path(config.resolve(config.analysis.out_dir)) / "compare";
  CompareReport report;
  for (double sigma2 : config.schedule.compare_sigma2_p) {
    for (auto kind : config.schedule.compare_kinds) {
      if (only && kind != *only) continue;
      RunConfig run = config;
      run.schedule.kind = kind;
      run.schedule.noise.sigma2_p = sigma2;
      char stem[64];
      std::snprintf(stem, sizeof(stem), "%s_s%g", transport::to_string(kind).c_str(), sigma2);
      run.train.checkpoint = (dir / (std::string(stem) + ".ckpt")).string();
      run.train.log = (dir / (std::string(stem) + "_log.csv")).string();
      run.train.resume = false;
      run.sample.checkpoint.clear();
      // The data directory is shared, so every kind trains on identical pairs.
      run.train.data_dir = config.data_dir();
      log::info(std::string("compare-transports: ") + stem);
      cmd_train(run);
      const auto model = load_model(run.train.checkpoint);
      auto traj = sample_rollout(run, model, start, run.sample.n_steps, sample_config(run));
      io::quantize_f32(traj);
      io::write_tct((dir / (std::string(stem) + ".tct")).string(), traj);
      const auto a = analyze(reference, {traj}, {stem}, std::nullopt, run.analysis);
      report.cells.push_back({kind, sigma2, traj.status, a.rows});
    }
  }
  write_text((dir / "compare.txt").string(), report.table());
  return report;
}

// ---------------------------------------------------------------------------
// sweep

std::string SweepReport::table() const {
  std::ostringstream out;
  out << rpadded("eps", 8) << rpadded("1/dtau", 8) << rpadded("frames", 10) << rpadded("JS(TIC1)", 12)
      << rpadded("JS(RG)", 12) << "  status\n";
  for (const auto& c : cells) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%8.3g%8d%10ld", c.eps, c.steps, c.frames);
    out << buf << fixed(c.js_tic1) << fixed(c.js_rg) << "  " << c.status << "\n";
  }
  return out.str();
}

double SweepReport::best_tic1() const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : cells) best = std::min(best, c.js_tic1);
  return best;
}

SweepReport cmd_sweep(const RunConfig& config) {
  config.validate();
  const auto model = load_model(config.checkpoint_path());
  const auto reference = io::read_tct(config.analysis.reference.empty() ? trajectory_file(config.data_dir(), 0)
                                                                        : config.resolve(config.analysis.reference));
  const auto start = io::read_tct(config.sample.start.empty() ? trajectory_file(config.data_dir(), 0)
                                                              : config.resolve(config.sample.start));
  SweepReport report;
  std::ostringstream csv;
  csv << "eps,steps,frames,js_tic1,js_rg,status\n";
  for (double eps : config.sample.sweep_eps) {
    for (int steps : config.sample.sweep_steps) {
      RunConfig run = config;
      run.sample.eps = eps;
      run.sample.steps = steps;
      const auto traj = sample_rollout(run, model, start, run.sample.sweep_n_steps, sample_config(run));
      SweepCell cell{eps, steps, static_cast<long>(traj.size()), traj.status, kDivergedJs, kDivergedJs};
      const auto a = analyze(reference, {traj}, {"sweep"}, std::nullopt, run.analysis);
      cell.js_tic1 = a.row("TIC1").js.front();
      cell.js_rg = a.row("RG").js.front();
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%g,%d,%ld,%.6f,%.6f,%s\n", eps, steps, cell.frames, cell.js_tic1, cell.js_rg,
                    cell.status.c_str());
      csv << buf;
      log::info("sweep: eps " + std::to_string(eps) + " steps " + std::to_string(steps) + " " + cell.status);
      report.cells.push_back(std::move(cell));
    }
  }
  const fs::path dir = config.resolve(config.analysis.out_dir);
  write_text((dir / "sweep.txt").string(), report.table());
  write_text((dir / "sweep.csv").string(), csv.str());
  return report;
}

}  // namespace tensorjump::cli
