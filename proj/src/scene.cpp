#include "softdr/scene.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace softdr {

using nlohmann::json;

namespace {

// Reads one JSON object, tracking the field path for error messages and
// rejecting keys nobody asked for.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ValidationError((path_.empty() ? "scene" : path_) + ": must be an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    throw ValidationError(field(key) + ": " + msg);
  }
  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  const json& raw(const std::string& key) {
    used_.insert(key);
    if (!has(key)) fail(key, "is required");
    return j_.at(key);
  }

  double number(const std::string& key, std::optional<double> fallback = std::nullopt) {
    used_.insert(key);
    if (!has(key)) {
      if (!fallback) fail(key, "is required");
      return *fallback;
    }
    const json& v = j_.at(key);
    if (!v.is_number()) fail(key, "must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(key, "must be finite");
    return d;
  }

  long integer(const std::string& key, std::optional<long> fallback = std::nullopt) {
    used_.insert(key);
    if (!has(key)) {
      if (!fallback) fail(key, "is required");
      return *fallback;
    }
    const json& v = j_.at(key);
    if (!v.is_number_integer()) fail(key, "must be an integer");
    return v.get<long>();
  }

  bool boolean(const std::string& key, bool fallback) {
    used_.insert(key);
    if (!has(key)) return fallback;
    if (!j_.at(key).is_boolean()) fail(key, "must be true or false");
    return j_.at(key).get<bool>();
  }

  std::string string(const std::string& key, std::optional<std::string> fallback = std::nullopt) {
    used_.insert(key);
    if (!has(key)) {
      if (!fallback) fail(key, "is required");
      return *fallback;
    }
    if (!j_.at(key).is_string()) fail(key, "must be a string");
    return j_.at(key).get<std::string>();
  }

  Vec3 vec3(const std::string& key, std::optional<Vec3> fallback = std::nullopt) {
    used_.insert(key);
    if (!has(key)) {
      if (!fallback) fail(key, "is required");
      return *fallback;
    }
    const json& v = j_.at(key);
    if (!v.is_array() || v.size() != 3) fail(key, "must be an array of 3 numbers");
    Vec3 out;
    for (int i = 0; i < 3; ++i) {
      if (!v[i].is_number()) fail(key, "must be an array of 3 numbers");
      out[i] = v[i].get<double>();
    }
    if (!out.allFinite()) fail(key, "must be finite");
    return out;
  }

  // Unit direction; renormalized only when not already unit, so that
  // re-parsing a serialized scene is a fixpoint.
  Vec3 direction(const std::string& key, std::optional<Vec3> fallback = std::nullopt) {
    Vec3 v = vec3(key, fallback);
    const double len = v.norm();
    if (!(len > 1e-12)) fail(key, "must be a nonzero vector");
    if (std::abs(len - 1.0) > 1e-12) v /= len;
    return v;
  }

  Fields child(const std::string& key) { return Fields(raw(key), field(key)); }
  Fields child_or_empty(const std::string& key) {
    used_.insert(key);
    if (!has(key)) return Fields(empty(), field(key));
    return Fields(j_.at(key), field(key));
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!used_.count(key)) fail(key, "unknown field");
    }
  }

 private:
  static const json& empty() {
    static const json e = json::object();
    return e;
  }
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

template <class F>
auto with_path(const Fields& f, const std::string& key, F fn) {
  try {
    return fn();
  } catch (const ValidationError& e) {
    f.fail(key, e.what());
  }
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

// ---------------------------------------------------------------------------

RobotParams parse_generator(Fields g) {
  RobotParams p;
  p.kind = with_path(g, "kind", [&] { return robot_kind_from_string(g.string("kind")); });
  p.length = g.number("length", p.length);
  p.width = g.number("width", p.width);
  p.depth = g.number("depth", p.depth);
  p.radius = g.number("radius", p.radius);
  p.thickness = g.number("thickness", p.thickness);
  p.tip_scale = g.number("tip_scale", p.tip_scale);
  p.nx = static_cast<int>(g.integer("nx", p.nx));
  p.ny = static_cast<int>(g.integer("ny", p.ny));
  p.segments = static_cast<int>(g.integer("segments", p.segments));
  p.rings = static_cast<int>(g.integer("rings", p.rings));
  p.layers = static_cast<int>(g.integer("layers", p.layers));
  p.cable_count = static_cast<int>(g.integer("cable_count", p.kind == RobotKind::starfish ? 5 : p.cable_count));
  p.via_points = static_cast<int>(g.integer("via_points", p.via_points));
  p.cable_offset = g.number("cable_offset", p.cable_offset);
  p.cable_phase = g.number("cable_phase", p.cable_phase);
  for (const char* k : {"length", "width", "depth", "radius", "thickness", "tip_scale"}) {
    const double v = g.number(k, 1.0);
    if (!(v > 0)) g.fail(k, "must be > 0");
  }
  if (p.via_points < 2) g.fail("via_points", "must be >= 2");
  if (p.cable_count < 1) g.fail("cable_count", "must be >= 1");
  g.finish();
  return p;
}

json generator_json(const RobotParams& p) {
  return {{"kind", to_string(p.kind)}, {"length", p.length},       {"width", p.width},
          {"depth", p.depth},          {"radius", p.radius},       {"thickness", p.thickness},
          {"tip_scale", p.tip_scale},  {"nx", p.nx},               {"ny", p.ny},
          {"segments", p.segments},    {"rings", p.rings},         {"layers", p.layers},
          {"cable_count", p.cable_count}, {"via_points", p.via_points},
          {"cable_offset", p.cable_offset}, {"cable_phase", p.cable_phase}};
}

Material parse_material(Fields m) {
  Material out;
  out.young_modulus = m.number("young_modulus_pa", out.young_modulus);
  out.poisson_ratio = m.number("poisson_ratio", out.poisson_ratio);
  out.density = m.number("density_kg_m3", out.density);
  out.damping_factor = m.number("damping_factor", out.damping_factor);
  if (!(out.young_modulus > 0)) m.fail("young_modulus_pa", "must be > 0");
  if (!(out.poisson_ratio > 0 && out.poisson_ratio < 0.5)) m.fail("poisson_ratio", "must be in (0, 0.5)");
  if (!(out.density > 0)) m.fail("density_kg_m3", "must be > 0");
  if (!(out.damping_factor >= 0)) m.fail("damping_factor", "must be >= 0");
  m.finish();
  return out;
}

RobotSpec parse_robot(Fields r, const std::filesystem::path& base_dir) {
  RobotSpec s;
  const bool has_gen = r.has("generator"), has_mesh = r.has("mesh");
  if (has_gen == has_mesh) r.fail("generator", "exactly one of robot.generator and robot.mesh is required");
  if (has_gen) {
    s.generator = parse_generator(r.child("generator"));
  } else {
    std::filesystem::path p = r.string("mesh");
    if (p.is_relative()) p = base_dir / p;
    s.mesh = std::filesystem::absolute(p).lexically_normal();
    s.mesh_format = with_path(r, "mesh_format",
                              [&] { return mesh_format_from_string(r.string("mesh_format", "json")); });
  }
  s.translation = r.vec3("translation", Vec3::Zero());
  s.rotation_axis = r.direction("rotation_axis", Vec3::UnitZ());
  s.rotation_angle = r.number("rotation_angle_rad", 0.0);
  s.material = parse_material(r.child_or_empty("material"));
  s.cable_stiffness = r.number("cable_stiffness_n_m", s.cable_stiffness);
  s.cable_damping = r.number("cable_damping_kg_s", s.cable_damping);
  if (!(s.cable_stiffness >= 0)) r.fail("cable_stiffness_n_m", "must be >= 0");
  if (!(s.cable_damping >= 0)) r.fail("cable_damping_kg_s", "must be >= 0");
  s.cable_mode = with_path(r, "cable_mode",
                           [&] { return cable_mode_from_string(r.string("cable_mode", "conserving")); });
  s.force_mapping = with_path(r, "force_mapping", [&] {
    return scatter_mode_from_string(r.string("force_mapping", "transpose"));
  });
  r.finish();
  return s;
}

json robot_json(const RobotSpec& s) {
  json j;
  if (s.generator) {
    j["generator"] = generator_json(*s.generator);
  } else {
    j["mesh"] = s.mesh.string();
    j["mesh_format"] = to_string(s.mesh_format);
  }
  j["translation"] = vec_json(s.translation);
  j["rotation_axis"] = vec_json(s.rotation_axis);
  j["rotation_angle_rad"] = s.rotation_angle;
  j["material"] = {{"young_modulus_pa", s.material.young_modulus},
                   {"poisson_ratio", s.material.poisson_ratio},
                   {"density_kg_m3", s.material.density},
                   {"damping_factor", s.material.damping_factor}};
  j["cable_stiffness_n_m"] = s.cable_stiffness;
  j["cable_damping_kg_s"] = s.cable_damping;
  j["cable_mode"] = to_string(s.cable_mode);
  j["force_mapping"] = to_string(s.force_mapping);
  return j;
}

SDFShape parse_shape(Fields s) {
  const std::string type = s.string("type");
  SDFShape out;
  auto positive = [&](const char* key, std::optional<double> fallback = std::nullopt) {
    const double v = s.number(key, fallback);
    if (!(v > 0)) s.fail(key, "must be > 0");
    return v;
  };
  if (type == "sphere") {
    out = Sphere{s.vec3("center"), positive("radius")};
  } else if (type == "capped_cylinder") {
    out = CappedCylinder{s.vec3("base"), s.direction("axis"), positive("radius"), positive("height")};
  } else if (type == "egg") {
    out = Egg{s.vec3("center"), positive("equatorial_radius"), positive("polar_scale_top", 1.3),
              positive("polar_scale_bottom", 1.0)};
  } else if (type == "half_space") {
    out = HalfSpace{s.vec3("point"), s.direction("normal")};
  } else {
    s.fail("type", "unknown shape '" + type + "' (sphere, capped_cylinder, egg, half_space)");
  }
  s.finish();
  return out;
}

json shape_json(const SDFShape& shape) {
  json j = {{"type", shape_type_name(shape)}};
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Sphere>) {
          j["center"] = vec_json(s.center);
          j["radius"] = s.radius;
        } else if constexpr (std::is_same_v<T, CappedCylinder>) {
          j["base"] = vec_json(s.base);
          j["axis"] = vec_json(s.axis);
          j["radius"] = s.radius;
          j["height"] = s.height;
        } else if constexpr (std::is_same_v<T, Egg>) {
          j["center"] = vec_json(s.center);
          j["equatorial_radius"] = s.equatorial_radius;
          j["polar_scale_top"] = s.polar_scale_top;
          j["polar_scale_bottom"] = s.polar_scale_bottom;
        } else {
          j["point"] = vec_json(s.point);
          j["normal"] = vec_json(s.normal);
        }
      },
      shape);
  return j;
}

ObjectSpec parse_object(Fields o) {
  ObjectSpec s;
  s.id = o.string("id");
  if (s.id.empty()) o.fail("id", "must not be empty");
  const std::string role = o.string("role");
  if (role == "target") {
    s.role = ObjectRole::target;
  } else if (role == "obstacle") {
    s.role = ObjectRole::obstacle;
  } else {
    o.fail("role", "must be 'target' or 'obstacle'");
  }
  s.shape = parse_shape(o.child("shape"));
  s.mesh_resolution = static_cast<int>(o.integer("mesh_resolution", 3));
  if (s.mesh_resolution < 1 || s.mesh_resolution > 6) o.fail("mesh_resolution", "must be in [1, 6]");
  Fields cam = o.child_or_empty("camera");
  s.image_resolution = static_cast<int>(cam.integer("resolution", 64));
  if (s.image_resolution < 1) cam.fail("resolution", "must be >= 1");
  s.near = cam.number("near", 1e-3);
  if (!(s.near > 0)) cam.fail("near", "must be > 0");
  s.far = cam.number("far", 0.0);
  if (cam.has("far") && !(s.far > s.near)) cam.fail("far", "must be > near");
  cam.finish();
  o.finish();
  return s;
}

SimConfig parse_sim(Fields s, double& duration) {
  SimConfig c;
  c.dt = s.number("dt_s", c.dt);
  if (!(c.dt > 0)) s.fail("dt_s", "must be > 0");
  duration = s.number("duration_s");
  if (!(duration >= 0)) s.fail("duration_s", "must be >= 0");
  c.gravity = s.vec3("gravity_m_s2", c.gravity);
  c.collisions_enabled = s.boolean("collisions_enabled", false);
  c.frame_count = static_cast<int>(s.integer("frame_count", c.frame_count));
  if (c.frame_count < 1) s.fail("frame_count", "must be >= 1");
  c.frame_window = s.number("frame_window", c.frame_window);
  if (!(c.frame_window > 0 && c.frame_window <= 1)) s.fail("frame_window", "must be in (0, 1]");
  c.frame_stride = static_cast<int>(s.integer("frame_stride", 0));
  if (c.frame_stride < 0) s.fail("frame_stride", "must be >= 0");
  Fields k = s.child_or_empty("contact");
  c.contact.penalty_stiffness = k.number("penalty_stiffness_n_m", c.contact.penalty_stiffness);
  c.contact.penalty_damping = k.number("penalty_damping_n_s_m", c.contact.penalty_damping);
  if (!(c.contact.penalty_stiffness >= 0)) k.fail("penalty_stiffness_n_m", "must be >= 0");
  if (!(c.contact.penalty_damping >= 0)) k.fail("penalty_damping_n_s_m", "must be >= 0");
  k.finish();
  s.finish();
  return c;
}

// Diagonal of the box around the robot's rest shape and every object mesh.
double default_far(const RobotGeometry& robot, const std::vector<ObjectSpec>& objects) {
  Eigen::AlignedBox3d box;
  for (const Vec3& v : robot.mesh.vertices) box.extend(v);
  for (const ObjectSpec& o : objects) {
    for (const Vec3& v : surface_mesh(o.shape, o.mesh_resolution).vertices) box.extend(v);
  }
  return box.diagonal().norm();
}

}  // namespace

RobotGeometry load_robot(const RobotSpec& spec) {
  RobotGeometry g;
  if (spec.generator) {
    auto gen = generate_robot(*spec.generator);
    g.mesh = std::move(gen.mesh);
    g.cables = std::move(gen.cables);
  } else {
    if (!std::filesystem::exists(spec.mesh)) {
      throw ValidationError("robot.mesh: file not found: " + spec.mesh.string());
    }
    auto file = load_mesh(spec.mesh, spec.mesh_format);
    g.mesh = std::move(file.mesh);
    g.cables = std::move(file.cables);
  }
  if (g.cables.empty()) throw ValidationError("robot: mesh declares no cables");
  const Mat3 rot = Eigen::AngleAxisd(spec.rotation_angle, spec.rotation_axis).toRotationMatrix();
  auto place = [&](Vec3& v) { v = rot * v + spec.translation; };
  if (spec.rotation_angle != 0 || !spec.translation.isZero(0)) {
    for (Vec3& v : g.mesh.vertices) place(v);
    for (CablePath& c : g.cables)
      for (Vec3& v : c.via_points) place(v);
  }
  return g;
}

Scene parse_scene(const json& j, const std::filesystem::path& base_dir) {
  Fields root(j, "");
  Scene s;
  s.name = root.string("name", "scene");
  s.robot = parse_robot(root.child("robot"), base_dir);

  const json& objects = root.raw("objects");
  if (!objects.is_array()) root.fail("objects", "must be an array");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    s.objects.push_back(parse_object(Fields(objects[i], "objects[" + std::to_string(i) + "]")));
    if (!ids.insert(s.objects.back().id).second) {
      throw ValidationError("objects[" + std::to_string(i) + "].id: duplicate id '" +
                            s.objects.back().id + "'");
    }
  }

  s.sim = parse_sim(root.child("sim"), s.duration);

  // Task: target and obstacles follow from the object roles; if spelled out
  // they must agree with them.
  std::optional<std::string> target;
  std::vector<std::string> obstacles;
  for (const ObjectSpec& o : s.objects) {
    if (o.role == ObjectRole::obstacle) {
      obstacles.push_back(o.id);
    } else if (target) {
      root.fail("objects", "more than one target object");
    } else {
      target = o.id;
    }
  }
  Fields task = root.child_or_empty("task");
  if (task.has("target")) {
    const std::string t = task.string("target");
    if (!ids.count(t)) task.fail("target", "no object with id '" + t + "'");
    if (target != t) task.fail("target", "object '" + t + "' does not have role target");
  } else {
    task.string("target", "");
  }
  if (task.has("obstacles")) {
    const json& list = task.raw("obstacles");
    if (!list.is_array()) task.fail("obstacles", "must be an array of ids");
    std::set<std::string> given;
    for (const json& id : list) {
      if (!id.is_string()) task.fail("obstacles", "must be an array of ids");
      if (!ids.count(id.get<std::string>())) {
        task.fail("obstacles", "no object with id '" + id.get<std::string>() + "'");
      }
      given.insert(id.get<std::string>());
    }
    if (given != std::set<std::string>(obstacles.begin(), obstacles.end())) {
      task.fail("obstacles", "must list exactly the objects with role obstacle");
    }
  }
  s.task.target = target;
  s.task.obstacles = obstacles;
  const double alpha_default = !target ? 0.0 : obstacles.empty() ? 1.0 : 0.7;
  s.task.alpha = task.number("alpha", alpha_default);
  with_path(task, "alpha", [&] {
    validate(s.task);
    return 0;
  });
  task.finish();

  Fields opt = root.child_or_empty("optimizer");
  s.optimizer.learning_rate = opt.number("learning_rate", s.optimizer.learning_rate);
  if (!(s.optimizer.learning_rate > 0)) opt.fail("learning_rate", "must be > 0");
  s.optimizer.iterations = static_cast<int>(opt.integer("iterations", s.optimizer.iterations));
  if (s.optimizer.iterations < 0) opt.fail("iterations", "must be >= 0");
  s.optimizer.gradient_method = with_path(opt, "gradient_method", [&] {
    return gradient_method_from_string(opt.string("gradient_method", "fd_central"));
  });
  s.optimizer.fd_epsilon = opt.number("fd_epsilon", s.optimizer.fd_epsilon);
  if (!(s.optimizer.fd_epsilon > 0)) opt.fail("fd_epsilon", "must be > 0");
  s.optimizer.checkpoint_interval = opt.integer("checkpoint_interval", 0);
  if (s.optimizer.checkpoint_interval < 0) opt.fail("checkpoint_interval", "must be >= 0");
  opt.finish();

  Fields render = root.child_or_empty("render");
  s.blur_sigma = render.number("blur_sigma_px", 0.0);
  if (!(s.blur_sigma >= 0)) render.fail("blur_sigma_px", "must be >= 0");
  render.finish();
  root.finish();

  // Geometry-dependent checks and defaults.
  const RobotGeometry robot = load_robot(s.robot);
  if (s.robot.generator && static_cast<int>(robot.cables.size()) != s.robot.generator->cable_count) {
    throw ValidationError("robot.generator.cable_count: generator produced " +
                          std::to_string(robot.cables.size()) + " cables");
  }
  const double far = default_far(robot, s.objects);
  for (std::size_t i = 0; i < s.objects.size(); ++i) {
    ObjectSpec& o = s.objects[i];
    if (o.far == 0) o.far = far;
    if (!(o.far > o.near)) {
      throw ValidationError("objects[" + std::to_string(i) + "].camera.far: must be > near");
    }
    if (std::holds_alternative<HalfSpace>(o.shape)) {
      throw ValidationError("objects[" + std::to_string(i) +
                            "].shape: half-spaces have no interior camera position");
    }
  }
  return s;
}

Scene parse_scene_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scene " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return parse_scene(j, std::filesystem::absolute(path).parent_path());
}

json to_json(const Scene& s) {
  json j;
  j["name"] = s.name;
  j["robot"] = robot_json(s.robot);
  j["objects"] = json::array();
  for (const ObjectSpec& o : s.objects) {
    j["objects"].push_back({{"id", o.id},
                            {"role", o.role == ObjectRole::target ? "target" : "obstacle"},
                            {"shape", shape_json(o.shape)},
                            {"mesh_resolution", o.mesh_resolution},
                            {"camera", {{"resolution", o.image_resolution},
                                        {"near", o.near},
                                        {"far", o.far}}}});
  }
  j["sim"] = {{"dt_s", s.sim.dt},
              {"duration_s", s.duration},
              {"gravity_m_s2", vec_json(s.sim.gravity)},
              {"collisions_enabled", s.sim.collisions_enabled},
              {"frame_count", s.sim.frame_count},
              {"frame_window", s.sim.frame_window},
              {"frame_stride", s.sim.frame_stride},
              {"contact", {{"penalty_stiffness_n_m", s.sim.contact.penalty_stiffness},
                           {"penalty_damping_n_s_m", s.sim.contact.penalty_damping}}}};
  json task = {{"obstacles", s.task.obstacles}, {"alpha", s.task.alpha}};
  if (s.task.target) task["target"] = *s.task.target;
  j["task"] = task;
  j["optimizer"] = {{"learning_rate", s.optimizer.learning_rate},
                    {"iterations", s.optimizer.iterations},
                    {"gradient_method", to_string(s.optimizer.gradient_method)},
                    {"fd_epsilon", s.optimizer.fd_epsilon},
                    {"checkpoint_interval", s.optimizer.checkpoint_interval}};
  j["render"] = {{"blur_sigma_px", s.blur_sigma}};
  return j;
}

Problem build_problem(const Scene& scene) {
  RobotGeometry robot = load_robot(scene.robot);
  std::vector<Cable> cables;
  for (const CablePath& c : robot.cables) {
    cables.push_back(make_cable(robot.mesh, c.via_points, scene.robot.cable_stiffness,
                                scene.robot.cable_damping, scene.robot.force_mapping));
  }
  std::vector<SDFShape> contact;
  if (scene.sim.collisions_enabled)
    for (const ObjectSpec& o : scene.objects) contact.push_back(o.shape);

  Problem p{Dynamics(std::move(robot.mesh), scene.robot.material, std::move(cables),
                     scene.robot.cable_mode, std::move(contact), scene.sim.contact, scene.sim.gravity),
            scene.sim, scene.duration, {}, std::nullopt, {}, scene.task.alpha, scene.blur_sigma};
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const ObjectSpec& o = scene.objects[i];
    p.objects.push_back(
        make_viewed_object(o.id, o.shape, o.mesh_resolution, o.image_resolution, o.near, o.far));
    if (o.role == ObjectRole::target) {
      p.target = static_cast<int>(i);
    } else {
      p.obstacles.push_back(static_cast<int>(i));
    }
  }
  return p;
}

}  // namespace softdr
