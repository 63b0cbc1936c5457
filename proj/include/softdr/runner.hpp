#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "softdr/scene.hpp"

namespace softdr {

/// Projected gradient step: max(p - lr * grad, 0) per entry.
std::vector<double> gd_step(std::span<const double> p, std::span<const double> grad,
                            double learning_rate);

GradientReport compute_gradient(const Problem& problem, const OptimConfig& opt,
                                std::span<const double> p, int threads);

/// Final-frame image metrics for one object: mean distance over its six views
/// and the fraction of pixels with distance below `close_threshold`.
struct FrameMetrics {
  double mean_distance = 0;
  double close_fraction = 0;
};
FrameMetrics final_frame_metrics(const Problem& problem, std::span<const Vec3> positions, int object,
                                 double close_threshold = 0.02);

struct TraceRow {
  int iter = 0;
  double loss = 0;
  double grip_term = 0;
  double avoid_term = 0;
  std::vector<double> p;
  std::vector<double> grad;
  std::vector<FrameMetrics> metrics;  // per object
};

struct RunResult {
  std::vector<TraceRow> rows;
  std::optional<std::string> failure;
};

/// Gradient descent from p = 0 for scene.optimizer.iterations updates,
/// writing into `out_dir`:
///   scene.json                 materialized scene
///   trace.csv                  iter, loss, grip_term, avoid_term, p_1..p_C, grad_1..grad_C
///   metrics.csv                per object: final-frame mean distance and contact-close fraction
///   delta_<object>_iter<k>.pgm distance images (six views side by side) at the
///                              last frame, for the first and last iteration
///   initial/, final/           OBJ surfaces at every loss frame of the first and
///                              last trajectories
/// A failing stage is recorded as a "# failure at iteration k" line in
/// trace.csv and rethrown; artifacts written so far are kept.
RunResult run_experiment(const Scene& scene, const std::filesystem::path& out_dir, int threads = 1);

/// %.17g formatting used for every numeric artifact.
std::string format_number(double v);

}  // namespace softdr
