#include "tensorjump/protein.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace tensorjump::protein {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Data files live next to the library; TENSORJUMP_DATA overrides.
std::string data_path(const std::string& name) {
  if (const char* dir = std::getenv("TENSORJUMP_DATA")) return std::string(dir) + "/" + name;
  return std::string(TENSORJUMP_DATA_DIR) + "/" + name;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

}  // namespace

ResidueTable ResidueTable::parse(const std::string& text) {
  ResidueTable table;
  std::istringstream in(text);
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split(line, '|');
    const std::string where = "residue table line " + std::to_string(line_no);
    if (fields.size() != 3) throw std::runtime_error(where + ": expected 3 '|'-separated fields");
    const auto head = words(fields[0]);
    if (head.size() != 3 || head[2].size() != 1) throw std::runtime_error(where + ": bad header");
    ResidueType r;
    r.code = head[0];
    r.index = std::stoi(head[1]);
    r.letter = head[2][0];
    r.atoms = words(fields[1]);
    if (r.atoms.size() < 4 || r.atoms[0] != "N" || r.atoms[1] != "CA" || r.atoms[2] != "C" || r.atoms[3] != "O") {
      throw std::runtime_error(where + ": atoms must start with N CA C O");
    }
    if (r.heavy_atoms() > kSlots + 1) throw std::runtime_error(where + ": more than 14 heavy atoms");
    for (const auto& b : words(fields[2])) {
      const auto dash = b.find('-');
      if (dash == std::string::npos) throw std::runtime_error(where + ": bad bond " + b);
      auto find = [&](const std::string& name) {
        const auto it = std::find(r.atoms.begin(), r.atoms.end(), name);
        if (it == r.atoms.end()) throw std::runtime_error(where + ": bond names unknown atom " + name);
        return static_cast<int>(it - r.atoms.begin());
      };
      r.bonds.emplace_back(find(b.substr(0, dash)), find(b.substr(dash + 1)));
    }
    if (r.index != static_cast<int>(table.types_.size())) throw std::runtime_error(where + ": indices must be 0..n-1");
    table.types_.push_back(std::move(r));
  }
  return table;
}

ResidueTable ResidueTable::load(const std::string& path) { return parse(read_file(path)); }

const ResidueTable& ResidueTable::standard() {
  static const ResidueTable table = load(data_path("residues.txt"));
  return table;
}

const ResidueType& ResidueTable::at(int index) const {
  if (index < 0 || index >= static_cast<int>(types_.size())) {
    throw std::invalid_argument("unknown residue label " + std::to_string(index));
  }
  return types_[static_cast<std::size_t>(index)];
}

int ResidueTable::index_of(const std::string& code) const {
  for (const auto& t : types_) {
    if (t.code == code || (code.size() == 1 && t.letter == code[0])) return t.index;
  }
  return -1;
}

VdwRadii VdwRadii::parse(const std::string& text) {
  VdwRadii out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    const auto w = words(line);
    if (w.size() != 2) throw std::runtime_error("vdw table: bad line '" + line + "'");
    out.radii_.emplace_back(w[0], std::stod(w[1]));
  }
  return out;
}

const VdwRadii& VdwRadii::standard() {
  static const VdwRadii radii = parse(read_file(data_path("vdw_radii.txt")));
  return radii;
}

double VdwRadii::radius(const std::string& element) const {
  for (const auto& [e, r] : radii_) {
    if (e == element) return r;
  }
  throw std::invalid_argument("no van der Waals radius for element " + element);
}

std::string element_of(const std::string& atom) { return atom.empty() ? std::string() : atom.substr(0, 1); }

Topology Topology::from_sequence(const std::string& one_letter) {
  Topology t;
  for (char c : one_letter) {
    const int idx = ResidueTable::standard().index_of(std::string(1, c));
    if (idx < 0) throw std::invalid_argument(std::string("unknown residue letter '") + c + "'");
    t.labels.push_back(idx);
  }
  return t;
}

std::vector<std::uint8_t> Topology::mask() const {
  std::vector<std::uint8_t> m(residues() * kSlots, 0);
  for (std::size_t i = 0; i < residues(); ++i) {
    const int filled = residue(i).heavy_atoms() - 1;
    for (int s = 0; s < filled; ++s) m[i * kSlots + static_cast<std::size_t>(s)] = 1;
  }
  return m;
}

std::size_t Topology::total_atoms() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < residues(); ++i) n += static_cast<std::size_t>(residue(i).heavy_atoms());
  return n;
}

IrrepsSpec slot_spec() { return IrrepsSpec({{1, kSlots}}); }

namespace {

// Slot of atom a (a != 1, i.e. not CA).
int slot_of(int atom) { return atom == 0 ? 0 : atom - 1; }

}  // namespace

TensorCloud encode(const Topology& topology, const Coordinates& atoms) {
  if (atoms.size() != topology.residues()) {
    throw std::invalid_argument("encode: " + std::to_string(atoms.size()) + " residues of coordinates for " +
                                std::to_string(topology.residues()) + " in the topology");
  }
  TensorCloud x(slot_spec(), topology.residues());
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    const auto& type = topology.residue(i);
    if (static_cast<int>(atoms[i].size()) != type.heavy_atoms()) {
      throw std::invalid_argument("encode: residue " + std::to_string(i) + " (" + type.code + ") has " +
                                  std::to_string(atoms[i].size()) + " atoms, expected " +
                                  std::to_string(type.heavy_atoms()));
    }
    const Vec3 ca = atoms[i][1];
    x.set_position(i, ca);
    auto f = x.feature(i);
    for (int a = 0; a < type.heavy_atoms(); ++a) {
      if (a == 1) continue;
      const Vec3 off = atoms[i][static_cast<std::size_t>(a)] - ca;
      // l=1 components are ordered (x, y, z) in this basis.
      for (int m = 0; m < 3; ++m) f[static_cast<std::size_t>(3 * slot_of(a) + m)] = off[m];
    }
  }
  x.set_mask(topology.mask());
  return x;
}

Coordinates decode(const TensorCloud& x, const Topology& topology) {
  if (!(x.spec() == slot_spec())) throw std::invalid_argument("decode: cloud is not in the 13x1 atom-slot layout");
  if (x.size() != topology.residues()) throw std::invalid_argument("decode: node count differs from topology");
  if (x.has_mask() && x.mask() != topology.mask()) throw std::invalid_argument("decode: mask disagrees with topology");
  Coordinates out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto& type = topology.residue(i);
    const Vec3 ca = x.position(i);
    const auto f = x.feature(i);
    out[i].resize(static_cast<std::size_t>(type.heavy_atoms()));
    for (int a = 0; a < type.heavy_atoms(); ++a) {
      if (a == 1) {
        out[i][1] = ca;
        continue;
      }
      const std::size_t b = static_cast<std::size_t>(3 * slot_of(a));
      out[i][static_cast<std::size_t>(a)] = ca + Vec3(f[b], f[b + 1], f[b + 2]);
    }
  }
  return out;
}

AtomGraph atom_graph(const Topology& topology, const Coordinates& atoms) {
  if (atoms.size() != topology.residues()) throw std::invalid_argument("atom_graph: residue count mismatch");
  AtomGraph g;
  int base = 0;
  int prev_c = -1;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    const auto& type = topology.residue(i);
    if (static_cast<int>(atoms[i].size()) != type.heavy_atoms()) {
      throw std::invalid_argument("atom_graph: atom count mismatch in residue " + std::to_string(i));
    }
    for (int a = 0; a < type.heavy_atoms(); ++a) {
      g.positions.push_back(atoms[i][static_cast<std::size_t>(a)]);
      g.elements.push_back(element_of(type.atoms[static_cast<std::size_t>(a)]));
    }
    for (const auto& [u, v] : type.bonds) g.bonds.emplace_back(base + u, base + v);
    if (prev_c >= 0) g.bonds.emplace_back(prev_c, base);  // peptide bond C(i-1)-N(i)
    prev_c = base + 2;
    base += type.heavy_atoms();
  }
  return g;
}

}  // namespace tensorjump::protein
