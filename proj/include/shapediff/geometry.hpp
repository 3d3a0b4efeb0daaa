//
// Project ShapeDiff - Copyright 2026 ShapeDiff Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef SHAPEDIFF_GEOMETRY_HPP_
#define SHAPEDIFF_GEOMETRY_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "shapediff/rng.hpp"

namespace shapediff {

using Points3 = Eigen::Matrix<double, Eigen::Dynamic, 3>;

enum class Element : int { H = 0, C, N, O, F, P, S, Cl, Br, I };

inline constexpr int kNumElements = 10;
/// Atom feature classes: 10 plain elements + 5 aromatic variants (C, N, O, P, S).
inline constexpr int kNumAtomClasses = 15;

const char* element_symbol(Element el);
Element element_from_symbol(const std::string& symbol);

/// Van der Waals radius in Angstrom; defines the molecular surface as the
/// boundary of the union of atom-centered spheres.
double vdw_radius(Element el);
/// Covalent radius in Angstrom; used for bond perception.
double covalent_radius(Element el);

bool element_can_be_aromatic(Element el);
int atom_class_index(Element el, bool aromatic);
std::pair<Element, bool> atom_class_from_index(int index);

struct Atom {
  Element el = Element::C;
  bool aromatic = false;
  Eigen::Vector3d pos = Eigen::Vector3d::Zero();
};

struct Molecule {
  std::vector<Atom> atoms;

  int size() const { return static_cast<int>(atoms.size()); }
  Points3 positions() const;
  /// One-hot class rows, |M| x 15.
  Eigen::MatrixXd features() const;
  Eigen::Vector3d centroid() const;
};

struct PointCloud {
  Points3 points;  // centered when `centered` is set
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();  // original mean, for un-centering
  bool centered = false;
};

struct QuerySample {
  Eigen::Vector3d point;
  double signed_distance = 0.0;  // positive inside the surface
};

/// Uniformly samples `n_points` on the boundary of the sphere-union surface
/// via area-weighted rejection sampling, then centers the cloud to zero mean.
PointCloud build_surface_point_cloud(const Molecule& mol, int n_points, std::uint64_t seed);

/// Signed distance to the sphere-union surface, positive inside:
/// -min_i(|q - c_i| - r_i).
double signed_distance(const Molecule& mol, const Eigen::Vector3d& q);

/// Draws 3k uniform points in the surface bounding box extended by 1 A per
/// side, then keeps at most k/2 inside points (all of them when fewer were
/// found) and fills the rest from outside candidates. k must be even.
std::vector<QuerySample> sample_query_points(const Molecule& mol, int k, std::uint64_t seed);

/// k nearest neighbors per point (row i lists the neighbor indices of point i,
/// nearest first). Self-edges excluded, ties broken by lower index.
Eigen::ArrayXXi knn_graph(const Points3& points, int k);

/// Uniformly distributed proper rotation (quaternion method).
Eigen::Matrix3d random_rotation(Rng& rng);
Eigen::Matrix3d random_rotation(std::uint64_t seed);

/// Subtracts the mean; returns the centered points and writes the offset.
Points3 center_points(const Points3& points, Eigen::Vector3d* offset);

}  // namespace shapediff

#endif  // SHAPEDIFF_GEOMETRY_HPP_
