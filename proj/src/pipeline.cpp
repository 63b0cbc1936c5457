#include "softdr/pipeline.hpp"

#include <cmath>

namespace softdr {

ViewedObject make_viewed_object(std::string id, const SDFShape& shape, int mesh_resolution,
                                int image_resolution, double near, double far) {
  ViewedObject o;
  o.id = std::move(id);
  o.shape = shape;
  o.mesh = surface_mesh(shape, mesh_resolution);
  o.rig = cube_rig(shape_center(shape), image_resolution, near, far);
  for (int f = 0; f < 6; ++f) o.images[f] = rasterize_depth(o.mesh.vertices, o.mesh.tris, o.rig.faces[f]);
  return o;
}

double Problem::object_weight(int object) const {
  if (target && *target == object) return obstacles.empty() ? 1.0 : alpha;
  const double q = static_cast<double>(obstacles.size());
  return target ? -(1.0 - alpha) / q : -1.0 / q;
}

std::array<DepthImage, 6> render_robot(const Problem& problem, std::span<const Vec3> positions,
                                       int object) {
  const auto& tris = problem.dynamics.mesh().surface_tris;
  std::array<DepthImage, 6> out;
  for (int f = 0; f < 6; ++f) {
    out[f] = blur(rasterize_depth(positions, tris, problem.objects[object].rig.faces[f]),
                  problem.blur_sigma);
  }
  return out;
}

std::array<DepthImage, 6> distance_images(const Problem& problem, std::span<const Vec3> positions,
                                          int object) {
  const auto robot = render_robot(problem, positions, object);
  std::array<DepthImage, 6> out;
  for (int f = 0; f < 6; ++f) out[f] = distance_image(robot[f], problem.objects[object].images[f]);
  return out;
}

std::vector<double> frame_distance_sums(const Problem& problem, std::span<const Vec3> positions) {
  std::vector<double> sums(problem.objects.size(), 0.0);
  for (std::size_t o = 0; o < problem.objects.size(); ++o) {
    for (const DepthImage& d : distance_images(problem, positions, static_cast<int>(o))) {
      sums[o] += pixel_mean(d);
    }
  }
  return sums;
}

void combine_losses(const Problem& problem, Evaluation& eval) {
  std::optional<double> grip;
  std::vector<double> avoids;
  if (problem.target) grip = eval.object_distance[*problem.target];
  for (int q : problem.obstacles) avoids.push_back(-eval.object_distance[q]);
  eval.grip_term = grip.value_or(0.0);
  eval.avoid_term = 0;
  if (!avoids.empty()) {
    for (double a : avoids) eval.avoid_term += a;
    eval.avoid_term /= static_cast<double>(avoids.size());
  }
  eval.loss = combined_loss(problem.alpha, grip, avoids);
  if (!std::isfinite(eval.loss)) throw NumericalError("loss is not finite");
}

Evaluation evaluate(const Problem& problem, std::span<const double> pull_ratios) {
  Evaluation eval;
  eval.trajectory = simulate(problem.dynamics, pull_ratios, problem.duration, problem.sim);
  eval.object_distance.assign(problem.objects.size(), 0.0);
  for (const SimState& frame : eval.trajectory.frames) {
    const auto sums = frame_distance_sums(problem, frame.positions);
    for (std::size_t o = 0; o < sums.size(); ++o) eval.object_distance[o] += sums[o];
  }
  const double count = 6.0 * static_cast<double>(eval.trajectory.frames.size());
  for (double& d : eval.object_distance) d /= count;
  combine_losses(problem, eval);
  return eval;
}

void add_frame_gradient(const Problem& problem, std::span<const Vec3> positions,
                        double frame_weight, std::span<Vec3> grad) {
  const auto& tris = problem.dynamics.mesh().surface_tris;
  for (std::size_t o = 0; o < problem.objects.size(); ++o) {
    const ViewedObject& obj = problem.objects[o];
    const double weight = problem.object_weight(static_cast<int>(o)) * frame_weight / 6.0;
    if (weight == 0) continue;
    for (int f = 0; f < 6; ++f) {
      const Camera& cam = obj.rig.faces[f];
      const Raster raster = rasterize(positions, tris, cam);
      const DepthImage robot = blur(raster.depth, problem.blur_sigma);
      std::vector<double> pixel_grad(robot.size(), 0.0);
      add_distance_mean_gradient(robot, obj.images[f], weight, pixel_grad);
      pixel_grad = blur_transpose(pixel_grad, robot.width, robot.height, problem.blur_sigma);
      accumulate_depth_gradient(raster, pixel_grad, positions, tris, cam, grad);
    }
  }
}

}  // namespace softdr
