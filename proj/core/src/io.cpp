#include "tensorjump/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace tensorjump::io {

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& text) {
  return fnv1a64(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

class Writer {
 public:
  template <class T>
  void put(T v) {
    std::uint8_t b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    out_.insert(out_.end(), b, b + sizeof(T));
  }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  void str(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  std::vector<std::uint8_t> finish() {
    put<std::uint64_t>(fnv1a64(out_));
    return std::move(out_);
  }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, const char* what) : what_(what) {
    if (bytes.size() < 8) throw FormatError(std::string(what) + ": file too short");
    body_ = bytes.first(bytes.size() - 8);
    std::uint64_t stored = 0;
    std::memcpy(&stored, bytes.data() + body_.size(), 8);
    if constexpr (std::endian::native == std::endian::big) stored = byteswap(stored);
    if (stored != fnv1a64(body_)) throw FormatError(std::string(what) + ": checksum mismatch");
  }
  template <class T>
  T get() {
    need(sizeof(T));
    std::uint8_t b[sizeof(T)];
    std::memcpy(b, body_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
  void raw(void* data, std::size_t n) {
    need(n);
    std::memcpy(data, body_.data() + pos_, n);
    pos_ += n;
  }
  std::string str() {
    const auto n = get<std::uint32_t>();
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  void expect_end() const {
    if (pos_ != body_.size()) throw FormatError(std::string(what_) + ": trailing bytes");
  }
  void need(std::size_t n) const {
    if (body_.size() - pos_ < n) throw FormatError(std::string(what_) + ": truncated");
  }

 private:
  static std::uint64_t byteswap(std::uint64_t v) {
    std::uint8_t b[8];
    std::memcpy(b, &v, 8);
    std::reverse(b, b + 8);
    std::memcpy(&v, b, 8);
    return v;
  }
  std::span<const std::uint8_t> body_;
  std::size_t pos_ = 0;
  const char* what_;
};

void check_f32(double v, const char* what) {
  if (!std::isfinite(v) || std::abs(v) > 3.4e38) throw std::invalid_argument(std::string(what) + ": value not representable as f32");
}

}  // namespace

void quantize_f32(Trajectory& traj) {
  for (auto& f : traj.frames) {
    for (double& v : f.features()) v = static_cast<float>(v);
    for (double& v : f.positions()) v = static_cast<float>(v);
  }
}

// ---------------------------------------------------------------------------
// Trajectories

std::vector<std::uint8_t> encode_tct(const Trajectory& traj) {
  const auto& spec = traj.spec;
  const std::size_t n = traj.n_nodes;
  if (!traj.labels.empty() && traj.labels.size() != n) throw std::invalid_argument("encode_tct: label count mismatch");
  if (!traj.mask.empty() && traj.mask.size() != n * spec.channels()) throw std::invalid_argument("encode_tct: mask size mismatch");
  Writer w;
  w.raw("TCTR", 4);
  w.put<std::uint32_t>(kTctVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(n));
  w.put<std::uint8_t>(spec.empty() ? 0xFF : static_cast<std::uint8_t>(spec.lmax()));
  for (int l = 0; l <= spec.lmax(); ++l) w.put<std::uint32_t>(static_cast<std::uint32_t>(spec.multiplicity(l)));
  w.put<std::uint64_t>(traj.frames.size());
  w.put<double>(traj.frame_interval);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = traj.labels.empty() ? -1 : traj.labels[i];
    if (label < -1 || label > 254) throw std::invalid_argument("encode_tct: label out of u8 range");
    w.put<std::uint8_t>(label < 0 ? 0xFF : static_cast<std::uint8_t>(label));
  }
  for (std::size_t c = 0; c < n * spec.channels(); ++c) w.put<std::uint8_t>(traj.mask.empty() ? 1 : (traj.mask[c] ? 1 : 0));
  for (const auto& f : traj.frames) {
    if (f.size() != n || !(f.spec() == spec)) throw std::invalid_argument("encode_tct: frame shape differs from trajectory");
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3 p = f.position(i);
      for (int d = 0; d < 3; ++d) {
        check_f32(p[d], "encode_tct");
        w.put<float>(static_cast<float>(p[d]));
      }
      for (double v : f.feature(i)) {
        check_f32(v, "encode_tct");
        w.put<float>(static_cast<float>(v));
      }
    }
  }
  return w.finish();
}

Trajectory decode_tct(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "tct");
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, "TCTR", 4) != 0) throw FormatError("tct: bad magic");
  if (const auto v = r.get<std::uint32_t>(); v != kTctVersion) throw FormatError("tct: unsupported version " + std::to_string(v));
  Trajectory t;
  t.n_nodes = r.get<std::uint32_t>();
  const auto lmax = r.get<std::uint8_t>();
  std::vector<irreps::IrrepBlock> blocks;
  if (lmax != 0xFF) {
    for (int l = 0; l <= lmax; ++l) {
      const auto m = r.get<std::uint32_t>();
      if (m > 0) blocks.push_back({l, static_cast<int>(m)});
    }
  }
  t.spec = IrrepsSpec(blocks);
  const auto frames = r.get<std::uint64_t>();
  t.frame_interval = r.get<double>();
  t.labels.resize(t.n_nodes);
  bool any_label = false;
  for (auto& l : t.labels) {
    const auto b = r.get<std::uint8_t>();
    l = b == 0xFF ? -1 : b;
    any_label |= b != 0xFF;
  }
  if (!any_label) t.labels.clear();
  t.mask.resize(t.n_nodes * t.spec.channels());
  bool all_on = true;
  for (auto& m : t.mask) {
    m = r.get<std::uint8_t>();
    if (m > 1) throw FormatError("tct: mask byte is not 0/1");
    all_on &= m == 1;
  }
  if (all_on) t.mask.clear();
  const std::size_t per_frame = t.n_nodes * (3 + t.spec.dim()) * sizeof(float);
  r.need(per_frame * frames);
  t.frames.reserve(frames);
  for (std::uint64_t f = 0; f < frames; ++f) {
    TensorCloud c(t.spec, t.n_nodes);
    for (std::size_t i = 0; i < t.n_nodes; ++i) {
      Vec3 p;
      for (int d = 0; d < 3; ++d) p[d] = r.get<float>();
      c.set_position(i, p);
      for (double& v : c.feature(i)) v = r.get<float>();
    }
    if (!t.mask.empty()) c.set_mask(t.mask);
    t.frames.push_back(std::move(c));
  }
  r.expect_end();
  return t;
}

void write_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_tct(const std::string& path, const Trajectory& traj) { write_bytes(path, encode_tct(traj)); }

Trajectory read_tct(const std::string& path) {
  try {
    return decode_tct(read_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.raw("TJCK", 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.str(ckpt.header);
  w.put<std::uint64_t>(ckpt.header_hash());
  w.put<std::uint64_t>(ckpt.step);
  w.put<std::uint64_t>(ckpt.params.size());
  for (double v : ckpt.params) {
    check_f32(v, "encode_checkpoint");
    w.put<float>(static_cast<float>(v));
  }
  w.put<std::uint8_t>(ckpt.resume ? 1 : 0);
  if (ckpt.resume) {
    const auto& s = *ckpt.resume;
    if (s.params.size() != ckpt.params.size() || s.adam_m.size() != s.params.size() || s.adam_v.size() != s.params.size()) {
      throw std::invalid_argument("encode_checkpoint: resume vectors must match the parameter count");
    }
    for (const auto* vec : {&s.params, &s.adam_m, &s.adam_v}) {
      for (double v : *vec) w.put<double>(v);
    }
    w.put<std::uint64_t>(s.adam_step);
    w.str(s.rng_state);
    w.str(s.caller_state);
  }
  return w.finish();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "checkpoint");
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, "TJCK", 4) != 0) throw FormatError("checkpoint: bad magic");
  if (const auto v = r.get<std::uint32_t>(); v != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(v));
  }
  Checkpoint c;
  c.header = r.str();
  if (r.get<std::uint64_t>() != c.header_hash()) throw FormatError("checkpoint: header hash mismatch");
  c.step = r.get<std::uint64_t>();
  const auto n = r.get<std::uint64_t>();
  r.need(n * sizeof(float));
  c.params.resize(n);
  for (double& v : c.params) v = r.get<float>();
  if (r.get<std::uint8_t>() == 1) {
    ResumeState s;
    r.need(3 * n * sizeof(double));
    for (auto* vec : {&s.params, &s.adam_m, &s.adam_v}) {
      vec->resize(n);
      for (double& v : *vec) v = r.get<double>();
    }
    s.adam_step = r.get<std::uint64_t>();
    s.rng_state = r.str();
    s.caller_state = r.str();
    c.resume = std::move(s);
  }
  r.expect_end();
  return c;
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) { write_bytes(path, encode_checkpoint(ckpt)); }

Checkpoint read_checkpoint(const std::string& path) {
  try {
    return decode_checkpoint(read_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Pair index

void write_pairs(const std::string& path, const std::vector<worlds::PairIndex>& pairs) {
  std::ostringstream os;
  os << "trajectory,frame,lag\n";
  for (const auto& p : pairs) os << p.trajectory << ',' << p.frame << ',' << p.lag << '\n';
  const std::string s = os.str();
  write_bytes(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

std::vector<worlds::PairIndex> read_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "trajectory,frame,lag") throw FormatError(path + ": missing pair index header");
  std::vector<worlds::PairIndex> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    worlds::PairIndex p;
    char c1 = 0, c2 = 0;
    std::istringstream ls(line);
    if (!(ls >> p.trajectory >> c1 >> p.frame >> c2 >> p.lag) || c1 != ',' || c2 != ',') {
      throw FormatError(path + ":" + std::to_string(line_no) + ": bad pair row");
    }
    out.push_back(p);
  }
  return out;
}

}  // namespace tensorjump::io
