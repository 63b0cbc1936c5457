#include "softdr/objective.hpp"

#include <algorithm>

namespace softdr {

void validate(const TaskSpec& t) {
  if (!(t.alpha >= 0 && t.alpha <= 1)) throw ValidationError("task.alpha must be in [0, 1]");
  if (!t.target && t.obstacles.empty()) {
    throw ValidationError("task: needs a target or at least one obstacle");
  }
  if (!t.target && t.alpha != 0) {
    throw ValidationError("task.alpha must be 0 when there is no target");
  }
  if (t.obstacles.empty() && t.alpha != 1) {
    throw ValidationError("task.alpha must be 1 when there are no obstacles");
  }
}

namespace {

void check_same_shape(const DepthImage& a, const DepthImage& b) {
  if (a.width != b.width || a.height != b.height) {
    throw ValidationError("distance image: resolution mismatch (" + std::to_string(a.width) + "x" +
                          std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                          std::to_string(b.height) + ")");
  }
}

}  // namespace

DepthImage distance_image(const DepthImage& robot, const DepthImage& object) {
  check_same_shape(robot, object);
  DepthImage out(robot.width, robot.height, 0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.pixels[i] = std::max(robot.pixels[i] - object.pixels[i], 0.0);
  }
  return out;
}

double pixel_mean(const DepthImage& img) {
  double sum = 0;
  for (double v : img.pixels) sum += v;
  return sum / static_cast<double>(img.size());
}

double grip_loss(std::span<const DepthImage> robot, std::span<const DepthImage> object) {
  if (robot.empty()) throw ValidationError("grip loss: no views or frames");
  if (robot.size() != object.size()) throw ValidationError("grip loss: image count mismatch");
  double sum = 0;
  for (std::size_t i = 0; i < robot.size(); ++i) sum += pixel_mean(distance_image(robot[i], object[i]));
  return sum / static_cast<double>(robot.size());
}

double avoid_loss(std::span<const DepthImage> robot, std::span<const DepthImage> obstacle) {
  return -grip_loss(robot, obstacle);
}

double combined_loss(double alpha, std::optional<double> grip, std::span<const double> avoids) {
  if (!(alpha >= 0 && alpha <= 1)) throw ValidationError("alpha must be in [0, 1]");
  if (avoids.empty() && alpha < 1) throw ValidationError("no obstacles but alpha < 1");
  if (!grip && alpha > 0) throw ValidationError("no target but alpha > 0");
  if (avoids.empty()) return *grip;
  double avoid_sum = 0;
  for (double a : avoids) avoid_sum += a;
  if (!grip || alpha == 0) return avoid_sum / static_cast<double>(avoids.size());
  return alpha * *grip + (1 - alpha) / static_cast<double>(avoids.size()) * avoid_sum;
}

void add_distance_mean_gradient(const DepthImage& robot, const DepthImage& object, double scale,
                                std::span<double> robot_grad) {
  check_same_shape(robot, object);
  const double w = scale / static_cast<double>(robot.size());
  for (std::size_t i = 0; i < robot.size(); ++i) {
    if (robot.pixels[i] > object.pixels[i]) robot_grad[i] += w;
  }
}

}  // namespace softdr
