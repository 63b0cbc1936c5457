#pragma once

#include <span>
#include <string>
#include <vector>

#include "softdr/pipeline.hpp"

namespace softdr {

enum class GradientMethod { fd_central, adjoint };

GradientMethod gradient_method_from_string(const std::string& s);
std::string to_string(GradientMethod m);

struct GradientReport {
  double loss_value = 0;
  std::vector<double> grad;
  GradientMethod method = GradientMethod::fd_central;
  Evaluation eval;  // the unperturbed run
  // fd: per-cable probe step; adjoint: checkpoint interval and stored states
  std::vector<double> step_sizes;
  long checkpoint_interval = 0;
  std::size_t checkpoints_stored = 0;
};

/// Central differences (l(p + eps e_i) - l(p - eps e_i)) / (2 eps). Probes
/// are independent simulations and run on up to `threads` threads; results do
/// not depend on the thread count.
GradientReport fd_gradient(const Problem& problem, std::span<const double> pull_ratios,
                           double epsilon, int threads = 1);

/// Reverse mode through every step, the coverage-frozen rasterizer and the
/// loss. States are stored every `checkpoint_interval` steps (0 = ceil(sqrt(N)))
/// and segments are recomputed during the backward sweep.
GradientReport adjoint_gradient(const Problem& problem, std::span<const double> pull_ratios,
                                long checkpoint_interval = 0);

}  // namespace softdr
