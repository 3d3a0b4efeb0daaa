//
// Project ShapeDiff - Copyright 2026 ShapeDiff Contributors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef SHAPEDIFF_DATASET_HPP_
#define SHAPEDIFF_DATASET_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "shapediff/geometry.hpp"

namespace shapediff {

/// One molecule per line:
/// {"atoms":[{"el":"C","aromatic":false,"xyz":[x,y,z]}, ...]}
std::vector<Molecule> load_dataset(const std::string& path);
void save_dataset(const std::vector<Molecule>& mols, const std::string& path);

std::string molecule_to_json_line(const Molecule& mol);
Molecule molecule_from_json_line(const std::string& line);

/// Standard XYZ: count header, blank comment, then "El x y z" per atom.
void export_xyz(const Molecule& mol, const std::string& path);

/// Parametric templates: tetrahedral carbon chains (3-8 atoms, 1.54 A),
/// planar aromatic 6-rings (1.40 A), and branched chains with N/O
/// substitutions; each instance randomly rotated and jittered (sigma = 0.02).
std::vector<Molecule> generate_toy_dataset(int n, std::uint64_t seed);

/// Flat "key = value" config file; '#' starts a comment.
std::map<std::string, std::string> load_config_file(const std::string& path);

}  // namespace shapediff

#endif  // SHAPEDIFF_DATASET_HPP_
