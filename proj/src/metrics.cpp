//
// Project ShapeDiff - Copyright 2026 ShapeDiff Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#include "shapediff/metrics.hpp"

#include <algorithm>
#include <bitset>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>

namespace shapediff {

namespace {

constexpr double kBondMargin = 0.4;       // added to the covalent-radius sum
constexpr double kCCReference = 1.52;     // C-C covalent-radius sum
constexpr double kTripleBand = 1.27;
constexpr double kAromaticLow = 1.34;
constexpr double kDoubleBand = 1.45;
constexpr double kOverlapP = 2.7;         // Gaussian amplitude

double gaussian_alpha(Element el) {
  const double r = vdw_radius(el);
  // p * (pi/alpha)^{3/2} equals the sphere volume 4/3 pi r^3.
  return std::numbers::pi *
         std::pow(3.0 * kOverlapP / (4.0 * std::numbers::pi * r * r * r), 2.0 / 3.0);
}

std::uint64_t hash_mix(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return h;
}

constexpr int kFingerprintBits = 2048;

std::bitset<kFingerprintBits> fold_fingerprint(const std::set<std::uint64_t>& ids) {
  std::bitset<kFingerprintBits> bits;
  for (std::uint64_t id : ids) bits.set(id % kFingerprintBits);
  return bits;
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

BondGraph infer_bonds(const Molecule& mol) {
  BondGraph graph;
  const int n = mol.size();
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const Atom& a = mol.atoms[i];
      const Atom& b = mol.atoms[j];
      const double d = (a.pos - b.pos).norm();
      const double cov_sum = covalent_radius(a.el) + covalent_radius(b.el);
      if (d > cov_sum + kBondMargin) continue;
      const double s = cov_sum / kCCReference;
      BondOrder order = BondOrder::Single;
      if (d < kTripleBand * s) {
        order = BondOrder::Triple;
      } else if (d < kDoubleBand * s) {
        order = (a.aromatic && b.aromatic && d >= kAromaticLow * s) ? BondOrder::Aromatic
                                                                    : BondOrder::Double;
      }
      graph.bonds.push_back({i, j, order, d});
    }
  }
  return graph;
}

bool connectivity(const Molecule& mol) { return connectivity(mol, infer_bonds(mol)); }

bool connectivity(const Molecule& mol, const BondGraph& bonds) {
  UnionFind uf(mol.size());
  for (const Bond& b : bonds.bonds) uf.unite(b.a, b.b);
  for (int i = 1; i < mol.size(); ++i)
    if (uf.find(i) != uf.find(0)) return false;
  return true;
}

double gaussian_overlap_volume(const Molecule& a, const Molecule& b) {
  double v = 0.0;
  for (const Atom& ai : a.atoms) {
    const double alpha_i = gaussian_alpha(ai.el);
    for (const Atom& bj : b.atoms) {
      const double alpha_j = gaussian_alpha(bj.el);
      const double sum = alpha_i + alpha_j;
      const double d2 = (ai.pos - bj.pos).squaredNorm();
      v += kOverlapP * kOverlapP * std::pow(std::numbers::pi / sum, 1.5) *
           std::exp(-alpha_i * alpha_j * d2 / sum);
    }
  }
  return v;
}

double shape_overlap_tanimoto(const Molecule& a, const Molecule& b) {
  const double vxy = gaussian_overlap_volume(a, b);
  const double vxx = gaussian_overlap_volume(a, a);
  const double vyy = gaussian_overlap_volume(b, b);
  return vxy / (vxx + vyy - vxy);
}

namespace {

/// Positions in the molecule's principal frame (centroid removed, axes by
/// descending covariance eigenvalue, det fixed to +1).
Points3 principal_frame(const Molecule& mol) {
  Points3 pos = mol.positions();
  const Eigen::RowVector3d c = pos.colwise().mean();
  pos.rowwise() -= c;
  Eigen::Matrix3d cov = pos.transpose() * pos / std::max(1, mol.size());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  Eigen::Matrix3d axes;  // columns ordered by descending eigenvalue
  axes.col(0) = es.eigenvectors().col(2);
  axes.col(1) = es.eigenvectors().col(1);
  axes.col(2) = es.eigenvectors().col(0);
  if (axes.determinant() < 0) axes.col(2) = -axes.col(2);
  return pos * axes;
}

Molecule with_positions(const Molecule& mol, const Points3& pos) {
  Molecule out = mol;
  for (int i = 0; i < out.size(); ++i) out.atoms[i].pos = pos.row(i).transpose();
  return out;
}

}  // namespace

double shape_similarity(const Molecule& a, const Molecule& b) {
  if (a.atoms.empty() || b.atoms.empty())
    throw std::invalid_argument("shape_similarity: empty molecule");
  const Molecule ax = with_positions(a, principal_frame(a));
  const Points3 by = principal_frame(b);

  // Proper sign flips of the principal axes.
  const double flips[4][3] = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
  double best = 0.0;
  for (const auto& f : flips) {
    Points3 flipped = by;
    for (int c = 0; c < 3; ++c) flipped.col(c) *= f[c];
    best = std::max(best, shape_overlap_tanimoto(ax, with_positions(b, flipped)));
  }
  return best;
}

std::set<std::uint64_t> circular_fingerprint_ids(const Molecule& mol) {
  const int n = mol.size();
  const BondGraph graph = infer_bonds(mol);
  std::vector<std::vector<std::pair<int, int>>> adj(n);  // (neighbor, order)
  for (const Bond& b : graph.bonds) {
    adj[b.a].emplace_back(b.b, static_cast<int>(b.order));
    adj[b.b].emplace_back(b.a, static_cast<int>(b.order));
  }

  std::vector<std::uint64_t> h(n);
  for (int i = 0; i < n; ++i) {
    std::uint64_t v = 0x9d2c5680u;
    v = hash_mix(v, static_cast<std::uint64_t>(mol.atoms[i].el));
    v = hash_mix(v, mol.atoms[i].aromatic ? 1 : 0);
    v = hash_mix(v, adj[i].size());
    h[i] = v;
  }

  std::set<std::uint64_t> ids(h.begin(), h.end());
  for (int radius = 1; radius <= 2; ++radius) {
    std::vector<std::uint64_t> next(n);
    for (int i = 0; i < n; ++i) {
      std::vector<std::pair<std::uint64_t, int>> env;
      env.reserve(adj[i].size());
      for (const auto& [j, order] : adj[i]) env.emplace_back(h[j], order);
      std::sort(env.begin(), env.end());
      std::uint64_t v = hash_mix(0x85ebca6bu, h[i]);
      v = hash_mix(v, static_cast<std::uint64_t>(radius));
      for (const auto& [hj, order] : env) {
        v = hash_mix(v, static_cast<std::uint64_t>(order));
        v = hash_mix(v, hj);
      }
      next[i] = v;
      ids.insert(v);
    }
    h = std::move(next);
  }
  return ids;
}

double graph_similarity(const Molecule& a, const Molecule& b) {
  const auto bits_a = fold_fingerprint(circular_fingerprint_ids(a));
  const auto bits_b = fold_fingerprint(circular_fingerprint_ids(b));
  const std::size_t inter = (bits_a & bits_b).count();
  const std::size_t uni = (bits_a | bits_b).count();
  if (uni == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double diversity(const std::vector<Molecule>& mols) {
  if (mols.size() < 2) throw std::invalid_argument("diversity: need at least 2 molecules");
  double total = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < mols.size(); ++i)
    for (std::size_t j = i + 1; j < mols.size(); ++j) {
      total += graph_similarity(mols[i], mols[j]);
      ++pairs;
    }
  return 1.0 - total / pairs;
}

std::vector<double> bond_lengths(const std::vector<Molecule>& mols) {
  std::vector<double> lengths;
  for (const Molecule& m : mols)
    for (const Bond& b : infer_bonds(m).bonds) lengths.push_back(b.length);
  return lengths;
}

namespace {

Eigen::ArrayXd smoothed_histogram(const std::vector<double>& values, int bins, double lo,
                                  double hi) {
  Eigen::ArrayXd counts = Eigen::ArrayXd::Zero(bins);
  for (double v : values) {
    int bin = static_cast<int>((v - lo) / (hi - lo) * bins);
    bin = std::clamp(bin, 0, bins - 1);
    counts[bin] += 1.0;
  }
  Eigen::ArrayXd p = counts / counts.sum() + 1e-12;
  return p / p.sum();
}

double kl(const Eigen::ArrayXd& p, const Eigen::ArrayXd& q) {
  return (p * (p / q).log()).sum();
}

}  // namespace

double js_divergence_bond_lengths(const std::vector<Molecule>& real,
                                  const std::vector<Molecule>& generated, int bins) {
  const std::vector<double> lr = bond_lengths(real);
  const std::vector<double> lg = bond_lengths(generated);
  if (lr.empty() || lg.empty())
    throw std::invalid_argument("js_divergence_bond_lengths: empty bond set");
  const Eigen::ArrayXd p = smoothed_histogram(lr, bins, 0.5, 3.0);
  const Eigen::ArrayXd q = smoothed_histogram(lg, bins, 0.5, 3.0);
  const Eigen::ArrayXd m = 0.5 * (p + q);
  return 0.5 * kl(p, m) + 0.5 * kl(q, m);
}

}  // namespace shapediff
