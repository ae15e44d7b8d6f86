// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the camforge Project.

// Writes one .cube file per registry entry next to a copy of the registry.
// usage: bake_luts <registry.txt> <out_dir> [lattice_size]

#include <filesystem>
#include <iostream>
#include <string>

#include "camforge/calibration.hpp"
#include "camforge/lut.hpp"
#include "camforge/png_io.hpp"

int main(int argc, char** argv) {
  if (argc < 3) {
    std::cerr << "usage: bake_luts <registry.txt> <out_dir> [lattice_size]\n";
    return 1;
  }
  try {
    const std::filesystem::path out_dir = argv[2];
    const int size = argc > 3 ? std::stoi(argv[3]) : 17;
    const auto registry = camforge::StyleRegistry::parse(camforge::read_file(argv[1]));
    std::filesystem::create_directories(out_dir);
    for (const auto& e : registry.entries()) {
      camforge::save_cube(camforge::bake_film_lut(e.index, e.name, size), out_dir / e.lut_path);
    }
    camforge::write_file(out_dir / "registry.txt", registry.serialize());
  } catch (const std::exception& e) {
    std::cerr << "bake_luts: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
