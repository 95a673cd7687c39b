#pragma once

// All-atom proteins as tensor clouds: one node per residue at its C-alpha,
// carrying the 13 heavy-atom offsets (atom - CA) as l=1 channels.

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "tensorjump/tensorcloud.hpp"

namespace tensorjump::protein {

inline constexpr int kSlots = 13;

struct ResidueType {
  std::string code;  // three-letter
  char letter = '?';
  int index = 0;
  std::vector<std::string> atoms;  // canonical order, atoms[1] == "CA"
  std::vector<std::pair<int, int>> bonds;
  int heavy_atoms() const { return static_cast<int>(atoms.size()); }
};

/// The canonical residue table (20 standard residues + norleucine).
class ResidueTable {
 public:
  /// Parses the text format of data/residues.txt.
  static ResidueTable parse(const std::string& text);
  static ResidueTable load(const std::string& path);
  /// Table shipped with the library.
  static const ResidueTable& standard();

  const std::vector<ResidueType>& types() const { return types_; }
  const ResidueType& at(int index) const;
  int index_of(const std::string& code) const;  // -1 if unknown

 private:
  std::vector<ResidueType> types_;
};

/// Element radii (Angstrom) keyed by element symbol.
class VdwRadii {
 public:
  static VdwRadii parse(const std::string& text);
  static const VdwRadii& standard();
  double radius(const std::string& element) const;

 private:
  std::vector<std::pair<std::string, double>> radii_;
};

/// Element of a PDB atom name (its first letter).
std::string element_of(const std::string& atom);

struct Topology {
  std::vector<int> labels;  // residue type indices

  static Topology from_sequence(const std::string& one_letter);
  std::size_t residues() const { return labels.size(); }
  const ResidueType& residue(std::size_t i) const { return ResidueTable::standard().at(labels.at(i)); }
  /// One byte per (residue, slot), spec order.
  std::vector<std::uint8_t> mask() const;
  std::size_t total_atoms() const;
};

/// Atom coordinates grouped by residue, each in canonical order.
using Coordinates = std::vector<std::vector<Vec3>>;

IrrepsSpec slot_spec();
TensorCloud encode(const Topology& topology, const Coordinates& atoms);
Coordinates decode(const TensorCloud& x, const Topology& topology);

/// Flat atom list with names/elements and the bond graph (peptide bonds included).
struct AtomGraph {
  std::vector<Vec3> positions;
  std::vector<std::string> elements;
  std::vector<std::pair<int, int>> bonds;
};
AtomGraph atom_graph(const Topology& topology, const Coordinates& atoms);

}  // namespace tensorjump::protein
