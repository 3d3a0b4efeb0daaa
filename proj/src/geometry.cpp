//
// Project ShapeDiff - Copyright 2026 ShapeDiff Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#include "shapediff/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace shapediff {

namespace {

struct ElementData {
  const char* symbol;
  double vdw;
  double covalent;
};

// H C N O F P S Cl Br I
constexpr ElementData kElements[kNumElements] = {
    {"H", 1.10, 0.31}, {"C", 1.70, 0.76}, {"N", 1.55, 0.71},  {"O", 1.52, 0.66},
    {"F", 1.47, 0.57}, {"P", 1.80, 1.07}, {"S", 1.80, 1.05},  {"Cl", 1.75, 1.02},
    {"Br", 1.85, 1.20}, {"I", 1.98, 1.39},
};

constexpr Element kAromaticElements[5] = {Element::C, Element::N, Element::O, Element::P,
                                          Element::S};

}  // namespace

const char* element_symbol(Element el) { return kElements[static_cast<int>(el)].symbol; }

Element element_from_symbol(const std::string& symbol) {
  for (int i = 0; i < kNumElements; ++i) {
    if (symbol == kElements[i].symbol) return static_cast<Element>(i);
  }
  throw std::invalid_argument("unknown element symbol: " + symbol);
}

double vdw_radius(Element el) { return kElements[static_cast<int>(el)].vdw; }
double covalent_radius(Element el) { return kElements[static_cast<int>(el)].covalent; }

bool element_can_be_aromatic(Element el) {
  for (Element a : kAromaticElements) {
    if (a == el) return true;
  }
  return false;
}

int atom_class_index(Element el, bool aromatic) {
  if (!aromatic) return static_cast<int>(el);
  for (int i = 0; i < 5; ++i) {
    if (kAromaticElements[i] == el) return kNumElements + i;
  }
  throw std::invalid_argument(std::string("element cannot be aromatic: ") + element_symbol(el));
}

std::pair<Element, bool> atom_class_from_index(int index) {
  if (index < 0 || index >= kNumAtomClasses) throw std::out_of_range("atom class index");
  if (index < kNumElements) return {static_cast<Element>(index), false};
  return {kAromaticElements[index - kNumElements], true};
}

Points3 Molecule::positions() const {
  Points3 out(size(), 3);
  for (int i = 0; i < size(); ++i) out.row(i) = atoms[i].pos.transpose();
  return out;
}

Eigen::MatrixXd Molecule::features() const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(size(), kNumAtomClasses);
  for (int i = 0; i < size(); ++i) out(i, atom_class_index(atoms[i].el, atoms[i].aromatic)) = 1.0;
  return out;
}

Eigen::Vector3d Molecule::centroid() const {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (const Atom& a : atoms) c += a.pos;
  return c / static_cast<double>(size());
}

PointCloud build_surface_point_cloud(const Molecule& mol, int n_points, std::uint64_t seed) {
  if (mol.atoms.empty()) throw std::invalid_argument("empty molecule");
  if (n_points < 8) throw std::invalid_argument("need at least 8 surface points");

  const int n_atoms = mol.size();
  std::vector<double> cum_area(n_atoms);
  double total = 0.0;
  for (int i = 0; i < n_atoms; ++i) {
    const double r = vdw_radius(mol.atoms[i].el);
    total += r * r;  // 4*pi cancels in the weights
    cum_area[i] = total;
  }

  Rng rng = Rng::stream(seed, "surface");
  Points3 pts(n_points, 3);
  int accepted = 0;
  long attempts = 0;
  const long max_attempts = 20000L * n_points;
  while (accepted < n_points) {
    if (++attempts > max_attempts)
      throw std::runtime_error("surface sampling stalled (fully buried spheres?)");
    const double u = rng.uniform() * total;
    const int i = static_cast<int>(std::lower_bound(cum_area.begin(), cum_area.end(), u) -
                                   cum_area.begin());
    Eigen::Vector3d dir = rng.normal3();
    const double norm = dir.norm();
    if (norm < 1e-12) continue;
    dir /= norm;
    const Eigen::Vector3d p = mol.atoms[i].pos + vdw_radius(mol.atoms[i].el) * dir;
    bool inside_other = false;
    for (int j = 0; j < n_atoms && !inside_other; ++j) {
      if (j == i) continue;
      inside_other = (p - mol.atoms[j].pos).norm() < vdw_radius(mol.atoms[j].el) - 1e-12;
    }
    if (inside_other) continue;
    pts.row(accepted++) = p.transpose();
  }

  PointCloud cloud;
  cloud.points = center_points(pts, &cloud.offset);
  cloud.centered = true;
  return cloud;
}

double signed_distance(const Molecule& mol, const Eigen::Vector3d& q) {
  if (mol.atoms.empty()) throw std::invalid_argument("empty molecule");
  double min_outside = std::numeric_limits<double>::infinity();
  for (const Atom& a : mol.atoms) {
    min_outside = std::min(min_outside, (q - a.pos).norm() - vdw_radius(a.el));
  }
  return -min_outside;
}

std::vector<QuerySample> sample_query_points(const Molecule& mol, int k, std::uint64_t seed) {
  if (k < 2 || k % 2 != 0) throw std::invalid_argument("query count must be even and >= 2");
  if (mol.atoms.empty()) throw std::invalid_argument("empty molecule");

  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  for (const Atom& a : mol.atoms) {
    const double r = vdw_radius(a.el);
    lo = lo.cwiseMin(a.pos.array().matrix() - Eigen::Vector3d::Constant(r));
    hi = hi.cwiseMax(a.pos.array().matrix() + Eigen::Vector3d::Constant(r));
  }
  lo.array() -= 1.0;
  hi.array() += 1.0;

  Rng rng = Rng::stream(seed, "queries");
  std::vector<QuerySample> inside, outside;
  for (int i = 0; i < 3 * k; ++i) {
    Eigen::Vector3d p;
    for (int c = 0; c < 3; ++c) p[c] = lo[c] + rng.uniform() * (hi[c] - lo[c]);
    const double sd = signed_distance(mol, p);
    (sd > 0.0 ? inside : outside).push_back({p, sd});
  }

  const int n_in = std::min<int>(static_cast<int>(inside.size()), k / 2);
  std::vector<QuerySample> out;
  out.reserve(k);
  out.insert(out.end(), inside.begin(), inside.begin() + n_in);
  const int n_out = std::min<int>(static_cast<int>(outside.size()), k - n_in);
  out.insert(out.end(), outside.begin(), outside.begin() + n_out);
  // Top up from leftover inside candidates if outside ran short (tiny boxes).
  for (int i = n_in; static_cast<int>(out.size()) < k; ++i) out.push_back(inside[i]);
  return out;
}

Eigen::ArrayXXi knn_graph(const Points3& points, int k) {
  const int n = static_cast<int>(points.rows());
  if (k >= n) throw std::invalid_argument("knn_graph: k must be < number of points");
  if (k < 1) throw std::invalid_argument("knn_graph: k must be >= 1");

  Eigen::ArrayXXi nbrs(n, k);
  std::vector<std::pair<double, int>> cand(n - 1);
  for (int i = 0; i < n; ++i) {
    int m = 0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      cand[m++] = {(points.row(i) - points.row(j)).squaredNorm(), j};
    }
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    for (int c = 0; c < k; ++c) nbrs(i, c) = cand[c].second;
  }
  return nbrs;
}

Eigen::Matrix3d random_rotation(Rng& rng) {
  Eigen::Vector4d q;
  do {
    for (int i = 0; i < 4; ++i) q[i] = rng.normal();
  } while (q.norm() < 1e-12);
  q.normalize();
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Eigen::Matrix3d random_rotation(std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "rotation");
  return random_rotation(rng);
}

Points3 center_points(const Points3& points, Eigen::Vector3d* offset) {
  const Eigen::RowVector3d mean = points.colwise().mean();
  if (offset != nullptr) *offset = mean.transpose();
  return points.rowwise() - mean;
}

}  // namespace shapediff
