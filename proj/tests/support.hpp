#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "softdr/tetmesh.hpp"

namespace softdr::test {

inline Vec3 random_vec(std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

inline TetMesh single_tet() {
  return build_tet_mesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, {{0, 1, 2, 3}}, {});
}

/// Small finger block: nx*ny*segments cells of 6 tets each.
inline TetMesh small_block(int nx, int ny, int segments, double w = 0.01, double d = 0.01,
                           double len = 0.02) {
  RobotParams p;
  p.nx = nx;
  p.ny = ny;
  p.segments = segments;
  p.width = w;
  p.depth = d;
  p.length = len;
  p.cable_count = 0;
  return generate_robot(p).mesh;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("softdr_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace softdr::test
