//
// Project ShapeDiff - Copyright 2026 ShapeDiff Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef SHAPEDIFF_METRICS_HPP_
#define SHAPEDIFF_METRICS_HPP_

#include <cstdint>
#include <set>
#include <vector>

#include <Eigen/Core>

#include "shapediff/geometry.hpp"

namespace shapediff {

enum class BondOrder : int { Single = 1, Double = 2, Triple = 3, Aromatic = 4 };

struct Bond {
  int a = 0;
  int b = 0;  // a < b
  BondOrder order = BondOrder::Single;
  double length = 0.0;
};

struct BondGraph {
  std::vector<Bond> bonds;
};

/// Distance-based bond perception: bonded iff |x_i - x_j| <= cov_i + cov_j
/// + 0.4 A; the order comes from distance bands scaled by the covalent-radius
/// sum relative to C-C (triple < 1.27s, aromatic pair in [1.34s, 1.45s],
/// double < 1.45s, else single).
BondGraph infer_bonds(const Molecule& mol);

/// True iff the bond graph has a single connected component.
bool connectivity(const Molecule& mol);
bool connectivity(const Molecule& mol, const BondGraph& bonds);

/// Gaussian-overlap volume between two molecules in their given poses.
double gaussian_overlap_volume(const Molecule& a, const Molecule& b);

/// Gaussian-overlap Tanimoto without alignment: Vxy / (Vxx + Vyy - Vxy).
double shape_overlap_tanimoto(const Molecule& a, const Molecule& b);

/// Shape similarity in [0,1] after centroid + principal-axes alignment,
/// taking the best of the four proper axis-sign flips.
double shape_similarity(const Molecule& a, const Molecule& b);

/// Hashed circular-substructure identifiers (radius 0..2) of every atom.
std::set<std::uint64_t> circular_fingerprint_ids(const Molecule& mol);

/// 2048-bit folded fingerprint Tanimoto over radius-2 circular substructures.
double graph_similarity(const Molecule& a, const Molecule& b);

/// 1 - mean pairwise graph similarity over unordered pairs; needs >= 2
/// molecules.
double diversity(const std::vector<Molecule>& mols);

/// Jensen-Shannon divergence (base e) between bond-length histograms of the
/// two sets; `bins` cells over [0.5, 3.0] A with 1e-12 additive smoothing.
double js_divergence_bond_lengths(const std::vector<Molecule>& real,
                                  const std::vector<Molecule>& generated, int bins = 100);

/// All bond lengths of a molecule set (via infer_bonds).
std::vector<double> bond_lengths(const std::vector<Molecule>& mols);

}  // namespace shapediff

#endif  // SHAPEDIFF_METRICS_HPP_
