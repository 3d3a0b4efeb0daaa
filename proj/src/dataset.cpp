//
// Project ShapeDiff - Copyright 2026 ShapeDiff Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#include "shapediff/dataset.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace shapediff {

using nlohmann::json;

std::string molecule_to_json_line(const Molecule& mol) {
  json atoms = json::array();
  for (const Atom& a : mol.atoms) {
    atoms.push_back({{"el", element_symbol(a.el)},
                     {"aromatic", a.aromatic},
                     {"xyz", {a.pos.x(), a.pos.y(), a.pos.z()}}});
  }
  return json{{"atoms", atoms}}.dump();
}

Molecule molecule_from_json_line(const std::string& line) {
  const json j = json::parse(line);
  Molecule mol;
  for (const json& a : j.at("atoms")) {
    Atom atom;
    atom.el = element_from_symbol(a.at("el").get<std::string>());
    atom.aromatic = a.at("aromatic").get<bool>();
    if (atom.aromatic && !element_can_be_aromatic(atom.el))
      throw std::invalid_argument(std::string("element cannot be aromatic: ") +
                                  element_symbol(atom.el));
    const json& xyz = a.at("xyz");
    atom.pos = {xyz.at(0).get<double>(), xyz.at(1).get<double>(), xyz.at(2).get<double>()};
    mol.atoms.push_back(atom);
  }
  if (mol.atoms.empty()) throw std::invalid_argument("empty molecule");
  return mol;
}

std::vector<Molecule> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  std::vector<Molecule> mols;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      mols.push_back(molecule_from_json_line(line));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return mols;
}

void save_dataset(const std::vector<Molecule>& mols, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset: " + path);
  for (const Molecule& m : mols) out << molecule_to_json_line(m) << '\n';
}

void export_xyz(const Molecule& mol, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write xyz: " + path);
  out << mol.size() << "\n\n";
  char buf[128];
  for (const Atom& a : mol.atoms) {
    std::snprintf(buf, sizeof(buf), "%s %.10f %.10f %.10f\n", element_symbol(a.el), a.pos.x(),
                  a.pos.y(), a.pos.z());
    out << buf;
  }
}

namespace {

constexpr double kBondLength = 1.54;
constexpr double kRingBond = 1.40;
constexpr double kJitter = 0.02;

// Tetrahedral zigzag direction components: s^2 = 2/3, c^2 = 1/3.
const double kZigS = std::sqrt(2.0 / 3.0);
const double kZigC = std::sqrt(1.0 / 3.0);

Molecule chain_template(int length) {
  Molecule mol;
  Eigen::Vector3d pos = Eigen::Vector3d::Zero();
  for (int i = 0; i < length; ++i) {
    mol.atoms.push_back({Element::C, false, pos});
    const double cz = (i % 2 == 0) ? kZigC : -kZigC;
    pos += kBondLength * Eigen::Vector3d(kZigS, 0.0, cz);
  }
  return mol;
}

Molecule ring_template() {
  Molecule mol;
  for (int i = 0; i < 6; ++i) {
    const double angle = i * std::numbers::pi / 3.0;
    mol.atoms.push_back(
        {Element::C, true, {kRingBond * std::cos(angle), kRingBond * std::sin(angle), 0.0}});
  }
  return mol;
}

Molecule branched_template(Rng& rng) {
  const int length = 4 + rng.uniform_int(4);  // 4..7 backbone
  Molecule mol = chain_template(length);

  // One branch carbon off an interior backbone atom.
  const int at = 1 + rng.uniform_int(length - 2);
  const double bz = (at % 2 == 0) ? -kZigC : kZigC;
  const Eigen::Vector3d dir = Eigen::Vector3d(0.0, kZigS, bz).normalized();
  mol.atoms.push_back({Element::C, false, mol.atoms[at].pos + kBondLength * dir});

  // Substitute one atom with N or O.
  const int sub = rng.uniform_int(mol.size());
  mol.atoms[sub].el = (rng.uniform() < 0.5) ? Element::N : Element::O;
  return mol;
}

}  // namespace

std::vector<Molecule> generate_toy_dataset(int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("generate_toy_dataset: n must be >= 1");
  std::vector<Molecule> mols;
  mols.reserve(n);
  for (int i = 0; i < n; ++i) {
    Rng rng = Rng::stream(seed, "toy", static_cast<std::uint64_t>(i));
    Molecule mol;
    switch (rng.uniform_int(3)) {
      case 0: mol = chain_template(3 + rng.uniform_int(6)); break;
      case 1: mol = ring_template(); break;
      default: mol = branched_template(rng); break;
    }
    const Eigen::Matrix3d rot = random_rotation(rng);
    for (Atom& a : mol.atoms) {
      a.pos = rot * a.pos + kJitter * rng.normal3();
    }
    mols.push_back(std::move(mol));
  }
  return mols;
}

std::map<std::string, std::string> load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  std::map<std::string, std::string> out;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": expected 'key = value'");
      continue;
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!key.empty()) out[key] = value;
  }
  return out;
}

}  // namespace shapediff
