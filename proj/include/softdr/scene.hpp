#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "softdr/cable.hpp"
#include "softdr/gradient.hpp"

namespace softdr {

struct RobotSpec {
  std::optional<RobotParams> generator;  // either a generator...
  std::filesystem::path mesh;           // ...or a mesh file (absolute after parsing)
  MeshFormat mesh_format = MeshFormat::json;
  Vec3 translation = Vec3::Zero();
  Vec3 rotation_axis = Vec3::UnitZ();
  double rotation_angle = 0;  // radians
  Material material;
  double cable_stiffness = 100.0;
  double cable_damping = 0.01;
  CableMode cable_mode = CableMode::conserving;
  ScatterMode force_mapping = ScatterMode::transpose;
};

enum class ObjectRole { target, obstacle };

struct ObjectSpec {
  std::string id;
  ObjectRole role = ObjectRole::target;
  SDFShape shape;
  int mesh_resolution = 3;
  int image_resolution = 64;
  double near = 1e-3;
  double far = 0;  // filled with the scene default when omitted
};

struct OptimConfig {
  double learning_rate = 0.1;
  int iterations = 30;
  GradientMethod gradient_method = GradientMethod::fd_central;
  double fd_epsilon = 1e-3;
  long checkpoint_interval = 0;  // 0 = ceil(sqrt(steps))
};

struct Scene {
  std::string name;
  RobotSpec robot;
  std::vector<ObjectSpec> objects;
  SimConfig sim;
  double duration = 0;
  TaskSpec task;
  OptimConfig optimizer;
  double blur_sigma = 0;
};

/// Robot mesh and cable paths in scene coordinates (transform applied).
struct RobotGeometry {
  TetMesh mesh;
  std::vector<CablePath> cables;
};

RobotGeometry load_robot(const RobotSpec& spec);

/// Validates and materializes every default. Relative mesh paths resolve
/// against `base_dir`. Errors name the offending field path.
Scene parse_scene(const nlohmann::json& j, const std::filesystem::path& base_dir);
Scene parse_scene_file(const std::filesystem::path& path);

/// Fully materialized form; parse_scene(to_json(s)) reproduces s.
nlohmann::json to_json(const Scene& s);

Problem build_problem(const Scene& scene);

}  // namespace softdr
