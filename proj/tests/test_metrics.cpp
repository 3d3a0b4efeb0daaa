//
// Project ShapeDiff - Copyright 2026 ShapeDiff Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <iterator>
#include <numbers>
#include <set>

#include "shapediff/dataset.hpp"
#include "shapediff/metrics.hpp"

using namespace shapediff;

namespace {

Molecule carbon_pair(double d, bool aromatic = false) {
  Molecule mol;
  mol.atoms.push_back({Element::C, aromatic, {0, 0, 0}});
  mol.atoms.push_back({Element::C, aromatic, {d, 0, 0}});
  return mol;
}

Molecule methane() {
  Molecule mol;
  mol.atoms.push_back({Element::C, false, {0, 0, 0}});
  const double b = 1.09;
  mol.atoms.push_back({Element::H, false, {b / std::sqrt(3), b / std::sqrt(3), b / std::sqrt(3)}});
  mol.atoms.push_back({Element::H, false, {-b / std::sqrt(3), -b / std::sqrt(3), b / std::sqrt(3)}});
  mol.atoms.push_back({Element::H, false, {-b / std::sqrt(3), b / std::sqrt(3), -b / std::sqrt(3)}});
  mol.atoms.push_back({Element::H, false, {b / std::sqrt(3), -b / std::sqrt(3), -b / std::sqrt(3)}});
  return mol;
}

Molecule ethane_heavy() {  // two carbons only, plus hydrogens trimmed
  Molecule mol;
  mol.atoms.push_back({Element::C, false, {0, 0, 0}});
  mol.atoms.push_back({Element::C, false, {1.54, 0, 0}});
  return mol;
}

Molecule rigid_motion(const Molecule& mol, const Eigen::Matrix3d& rot,
                      const Eigen::Vector3d& shift) {
  Molecule out = mol;
  for (Atom& a : out.atoms) a.pos = rot * a.pos + shift;
  return out;
}

}  // namespace

TEST_CASE("bond perception bands") {
  CHECK(infer_bonds(carbon_pair(1.54)).bonds.size() == 1);
  CHECK(infer_bonds(carbon_pair(1.54)).bonds[0].order == BondOrder::Single);
  CHECK(infer_bonds(carbon_pair(5.0)).bonds.empty());
  CHECK(infer_bonds(carbon_pair(1.34)).bonds[0].order == BondOrder::Double);
  CHECK(infer_bonds(carbon_pair(1.20)).bonds[0].order == BondOrder::Triple);
  CHECK(infer_bonds(carbon_pair(1.40, true)).bonds[0].order == BondOrder::Aromatic);
  // Aromatic band requires both flags.
  CHECK(infer_bonds(carbon_pair(1.40, false)).bonds[0].order == BondOrder::Double);

  // Rigid-motion invariance.
  const Molecule moved = rigid_motion(methane(), random_rotation(3), {5, -2, 1});
  const BondGraph a = infer_bonds(methane());
  const BondGraph b = infer_bonds(moved);
  REQUIRE(a.bonds.size() == b.bonds.size());
  for (std::size_t i = 0; i < a.bonds.size(); ++i) {
    CHECK(a.bonds[i].a == b.bonds[i].a);
    CHECK(a.bonds[i].b == b.bonds[i].b);
    CHECK(a.bonds[i].order == b.bonds[i].order);
  }
}

TEST_CASE("connectivity against a union-find oracle") {
  Molecule single;
  single.atoms.push_back({Element::C, false, {0, 0, 0}});
  CHECK(connectivity(single));

  CHECK(connectivity(carbon_pair(1.54)));
  CHECK_FALSE(connectivity(carbon_pair(8.0)));

  // Random scatter: compare against an adjacency BFS.
  Rng rng = Rng::stream(5, "scatter");
  for (int trial = 0; trial < 20; ++trial) {
    Molecule mol;
    for (int i = 0; i < 8; ++i)
      mol.atoms.push_back({Element::C, false, 2.2 * rng.normal3()});
    const BondGraph g = infer_bonds(mol);
    std::vector<std::vector<int>> adj(mol.size());
    for (const Bond& b : g.bonds) {
      adj[b.a].push_back(b.b);
      adj[b.b].push_back(b.a);
    }
    std::vector<bool> seen(mol.size(), false);
    std::vector<int> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
      const int cur = stack.back();
      stack.pop_back();
      for (int nxt : adj[cur])
        if (!seen[nxt]) {
          seen[nxt] = true;
          stack.push_back(nxt);
        }
    }
    bool all = true;
    for (bool s : seen) all = all && s;
    CHECK(connectivity(mol) == all);
  }
}

TEST_CASE("shape similarity: identity, decay, closed form") {
  const Molecule mol = generate_toy_dataset(1, 7)[0];
  CHECK(shape_similarity(mol, mol) == doctest::Approx(1.0).epsilon(1e-9));

  // Two single atoms: the raw overlap ratio matches the closed form and
  // decays with distance.
  Molecule a, b;
  a.atoms.push_back({Element::C, false, {0, 0, 0}});
  double prev = 1.1;
  for (double d : {0.0, 0.5, 1.0, 2.0, 4.0, 8.0}) {
    b.atoms.clear();
    b.atoms.push_back({Element::C, false, {d, 0, 0}});
    const double sim = shape_overlap_tanimoto(a, b);
    // Equal-width Gaussians: Vxy = Vxx * exp(-alpha d^2 / 2).
    const double r = vdw_radius(Element::C);
    const double alpha = std::numbers::pi *
        std::pow(3.0 * 2.7 / (4.0 * std::numbers::pi * r * r * r), 2.0 / 3.0);
    const double ratio = std::exp(-alpha * d * d / 2.0);
    CHECK(sim == doctest::Approx(ratio / (2.0 - ratio)).epsilon(1e-9));
    CHECK(sim < prev + 1e-12);
    prev = sim;
  }

  // Aligned similarity of the same shape under a rigid motion is 1.
  const Molecule moved = rigid_motion(mol, random_rotation(9), {3, 1, -2});
  CHECK(shape_similarity(mol, moved) == doctest::Approx(1.0).epsilon(1e-6));

  // Symmetry and invariance under a common rigid motion.
  const Molecule other = generate_toy_dataset(2, 11)[1];
  const double ab = shape_similarity(mol, other);
  CHECK(shape_similarity(other, mol) == doctest::Approx(ab).epsilon(1e-9));
  const Eigen::Matrix3d rot = random_rotation(13);
  const Eigen::Vector3d shift{1, 2, 3};
  CHECK(shape_similarity(rigid_motion(mol, rot, shift), rigid_motion(other, rot, shift)) ==
        doctest::Approx(ab).epsilon(1e-6));
}

TEST_CASE("graph similarity: identity, disjoint elements, set oracle") {
  const Molecule m = methane();
  CHECK(graph_similarity(m, m) == 1.0);

  Molecule oxygens;
  oxygens.atoms.push_back({Element::O, false, {0, 0, 0}});
  oxygens.atoms.push_back({Element::O, false, {1.2, 0, 0}});
  Molecule nitrogens;
  nitrogens.atoms.push_back({Element::N, false, {0, 0, 0}});
  nitrogens.atoms.push_back({Element::N, false, {1.1, 0, 0}});
  CHECK(graph_similarity(oxygens, nitrogens) == 0.0);

  // Tanimoto over the identifier sets recomputed independently.
  const Molecule e = ethane_heavy();
  const auto ids_m = circular_fingerprint_ids(m);
  const auto ids_e = circular_fingerprint_ids(e);
  std::set<std::uint64_t> folded_m, folded_e;
  for (auto id : ids_m) folded_m.insert(id % 2048);
  for (auto id : ids_e) folded_e.insert(id % 2048);
  std::set<std::uint64_t> inter, uni;
  std::set_intersection(folded_m.begin(), folded_m.end(), folded_e.begin(), folded_e.end(),
                        std::inserter(inter, inter.begin()));
  std::set_union(folded_m.begin(), folded_m.end(), folded_e.begin(), folded_e.end(),
                 std::inserter(uni, uni.begin()));
  CHECK(graph_similarity(m, e) ==
        doctest::Approx(static_cast<double>(inter.size()) / uni.size()).epsilon(1e-12));

  // Invariance to atom reordering.
  Molecule reordered = m;
  std::swap(reordered.atoms[0], reordered.atoms[3]);
  std::swap(reordered.atoms[1], reordered.atoms[2]);
  CHECK(graph_similarity(m, reordered) == 1.0);
}

TEST_CASE("diversity over unordered pairs") {
  const Molecule m = methane();
  CHECK(diversity({m, m, m}) == doctest::Approx(0.0));

  Molecule oxy;
  oxy.atoms.push_back({Element::O, false, {0, 0, 0}});
  Molecule nit;
  nit.atoms.push_back({Element::N, false, {0, 0, 0}});
  Molecule sul;
  sul.atoms.push_back({Element::S, false, {0, 0, 0}});
  CHECK(diversity({oxy, nit, sul}) == doctest::Approx(1.0));

  const std::vector<Molecule> three = generate_toy_dataset(3, 15);
  const double manual = 1.0 - (graph_similarity(three[0], three[1]) +
                               graph_similarity(three[0], three[2]) +
                               graph_similarity(three[1], three[2])) / 3.0;
  CHECK(diversity(three) == doctest::Approx(manual).epsilon(1e-15));
  CHECK_THROWS(diversity({m}));
}

TEST_CASE("bond-length JS divergence") {
  const std::vector<Molecule> real = generate_toy_dataset(20, 17);
  CHECK(js_divergence_bond_lengths(real, real) == doctest::Approx(0.0));

  // Disjoint supports approach ln 2 (up to the smoothing mass).
  const std::vector<Molecule> tight{carbon_pair(1.1)};
  const std::vector<Molecule> wide{carbon_pair(1.9)};
  CHECK(js_divergence_bond_lengths(tight, wide) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-6));

  // Independent recomputation over the same histograms.
  const std::vector<Molecule> gen = generate_toy_dataset(12, 19);
  auto hist = [](const std::vector<Molecule>& ms) {
    Eigen::ArrayXd h = Eigen::ArrayXd::Zero(100);
    for (double v : bond_lengths(ms)) {
      int bin = static_cast<int>((v - 0.5) / 2.5 * 100);
      bin = std::clamp(bin, 0, 99);
      h[bin] += 1.0;
    }
    Eigen::ArrayXd p = h / h.sum() + 1e-12;
    return Eigen::ArrayXd(p / p.sum());
  };
  const Eigen::ArrayXd p = hist(real), q = hist(gen), m = 0.5 * (p + q);
  const double manual = 0.5 * (p * (p / m).log()).sum() + 0.5 * (q * (q / m).log()).sum();
  CHECK(js_divergence_bond_lengths(real, gen) == doctest::Approx(manual).epsilon(1e-12));

  CHECK_THROWS(js_divergence_bond_lengths({}, real));
}
