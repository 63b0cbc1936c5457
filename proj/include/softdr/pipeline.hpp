#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "softdr/objective.hpp"
#include "softdr/renderer.hpp"
#include "softdr/simulator.hpp"

namespace softdr {

/// A rigid scene object with its camera rig. Its own depth images never
/// change, so they are rendered once.
struct ViewedObject {
  std::string id;
  SDFShape shape;
  SurfaceMesh mesh;
  CubeRig rig;
  std::array<DepthImage, 6> images;
};

ViewedObject make_viewed_object(std::string id, const SDFShape& shape, int mesh_resolution,
                                int image_resolution, double near, double far);

/// Everything needed to go from pull ratios to a loss:
/// simulate -> render each frame from every object's rig -> loss.
struct Problem {
  Dynamics dynamics;
  SimConfig sim;
  double duration = 0;
  std::vector<ViewedObject> objects;
  std::optional<int> target;  // index into objects
  std::vector<int> obstacles;
  double alpha = 1.0;
  double blur_sigma = 0;

  std::size_t cable_count() const { return dynamics.cable_count(); }
  /// Loss weight of an object's mean distance: alpha for the target,
  /// -(1 - alpha) / |Q| per obstacle (collapsing to 1 / -1/|Q| when the other
  /// part is absent).
  double object_weight(int object) const;
};

/// Robot depth images (after the optional blur) from one object's six cameras.
std::array<DepthImage, 6> render_robot(const Problem& problem, std::span<const Vec3> positions,
                                       int object);

/// Distance images of one object's six views for the robot at `positions`.
std::array<DepthImage, 6> distance_images(const Problem& problem, std::span<const Vec3> positions,
                                          int object);

struct Evaluation {
  double loss = 0;
  double grip_term = 0;   // 0 without a target
  double avoid_term = 0;  // mean over obstacles of the avoid loss, 0 without obstacles
  std::vector<double> object_distance;  // per object: mean over views and frames of mean distance
  Trajectory trajectory;
};

/// Per-frame mean distance sum per object (not yet divided by view/frame count).
std::vector<double> frame_distance_sums(const Problem& problem, std::span<const Vec3> positions);

/// Combines per-object mean distances into the loss and its two terms.
void combine_losses(const Problem& problem, Evaluation& eval);

Evaluation evaluate(const Problem& problem, std::span<const double> pull_ratios);

/// Gradient of the loss contribution of one frame with respect to robot vertex
/// positions, with coverage held fixed; `frame_weight` is 1 / |T|.
void add_frame_gradient(const Problem& problem, std::span<const Vec3> positions,
                        double frame_weight, std::span<Vec3> grad);

}  // namespace softdr
