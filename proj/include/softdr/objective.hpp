#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "softdr/renderer.hpp"

namespace softdr {

/// Which objects the loss looks at. Obstacles form the set Q.
struct TaskSpec {
  std::optional<std::string> target;
  std::vector<std::string> obstacles;
  double alpha = 1.0;
};

void validate(const TaskSpec& t);

/// Elementwise max(robot - object, 0). Throws on a resolution mismatch.
DepthImage distance_image(const DepthImage& robot, const DepthImage& object);

double pixel_mean(const DepthImage& img);

/// Mean over the image pairs (one per view and frame) of the per-image pixel
/// mean of the distance image.
double grip_loss(std::span<const DepthImage> robot, std::span<const DepthImage> object);
double avoid_loss(std::span<const DepthImage> robot, std::span<const DepthImage> obstacle);

/// alpha * grip + (1 - alpha) / |Q| * sum(avoid). `avoids` holds one avoid
/// loss per obstacle. Without a target the grip term must be absent and
/// alpha zero; with no obstacles alpha must be one.
double combined_loss(double alpha, std::optional<double> grip, std::span<const double> avoids);

/// d(mean pixel of distance image)/d(robot pixel), scaled by `scale`: zero
/// where robot <= object (the kink included).
void add_distance_mean_gradient(const DepthImage& robot, const DepthImage& object, double scale,
                                std::span<double> robot_grad);

}  // namespace softdr
