#include "softdr/runner.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace softdr {

std::vector<double> gd_step(std::span<const double> p, std::span<const double> grad,
                            double learning_rate) {
  if (p.size() != grad.size()) throw ValidationError("gd_step: dimension mismatch");
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw NumericalError("gd_step: gradient entry " + std::to_string(i + 1) + " is not finite");
    }
    out[i] = std::max(p[i] - learning_rate * grad[i], 0.0);
  }
  return out;
}

GradientReport compute_gradient(const Problem& problem, const OptimConfig& opt,
                                std::span<const double> p, int threads) {
  if (opt.gradient_method == GradientMethod::adjoint) {
    return adjoint_gradient(problem, p, opt.checkpoint_interval);
  }
  return fd_gradient(problem, p, opt.fd_epsilon, threads);
}

FrameMetrics final_frame_metrics(const Problem& problem, std::span<const Vec3> positions, int object,
                                 double close_threshold) {
  FrameMetrics m;
  std::size_t close = 0, total = 0;
  for (const DepthImage& d : distance_images(problem, positions, object)) {
    m.mean_distance += pixel_mean(d);
    for (double v : d.pixels) close += v < close_threshold;
    total += d.size();
  }
  m.mean_distance /= 6.0;
  m.close_fraction = static_cast<double>(close) / static_cast<double>(total);
  return m;
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

void write_snapshots(const Problem& problem, const Trajectory& traj,
                     const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < traj.frames.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "frame_%08ld.obj", traj.frame_steps[i]);
    write_obj(dir / name, problem.dynamics.mesh(), traj.frames[i].positions);
  }
}

void write_distance_strips(const Problem& problem, std::span<const Vec3> positions, int iter,
                           const std::filesystem::path& dir) {
  for (std::size_t o = 0; o < problem.objects.size(); ++o) {
    const auto images = distance_images(problem, positions, static_cast<int>(o));
    const double far = problem.objects[o].rig.faces[0].far;
    write_pgm16(dir / ("delta_" + problem.objects[o].id + "_iter" + std::to_string(iter) + ".pgm"),
                cube_strip(images), 0.0, far);
  }
}

}  // namespace

RunResult run_experiment(const Scene& scene, const std::filesystem::path& out_dir, int threads) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream echo(out_dir / "scene.json");
    echo << to_json(scene).dump(2) << '\n';
  }
  const Problem problem = build_problem(scene);
  const std::size_t c = problem.cable_count();
  const int iterations = scene.optimizer.iterations;

  std::ofstream trace(out_dir / "trace.csv");
  std::ofstream metrics(out_dir / "metrics.csv");
  if (!trace || !metrics) throw ValidationError("cannot write into " + out_dir.string());
  trace << "iter,loss,grip_term,avoid_term";
  for (std::size_t i = 1; i <= c; ++i) trace << ",p_" << i;
  for (std::size_t i = 1; i <= c; ++i) trace << ",grad_" << i;
  trace << '\n';
  metrics << "iter";
  for (const ViewedObject& o : problem.objects) {
    metrics << ',' << o.id << "_mean_distance," << o.id << "_contact_close_fraction";
  }
  metrics << '\n';
  trace.flush();
  metrics.flush();

  RunResult result;
  std::vector<double> p(c, 0.0);
  for (int k = 0; k <= iterations; ++k) {
    try {
      GradientReport g = compute_gradient(problem, scene.optimizer, p, threads);
      const Trajectory& traj = g.eval.trajectory;
      TraceRow row{k, g.eval.loss, g.eval.grip_term, g.eval.avoid_term, p, g.grad, {}};
      const auto& last = traj.frames.back().positions;
      for (std::size_t o = 0; o < problem.objects.size(); ++o) {
        row.metrics.push_back(final_frame_metrics(problem, last, static_cast<int>(o)));
      }

      trace << k << ',' << format_number(row.loss) << ',' << format_number(row.grip_term) << ','
            << format_number(row.avoid_term);
      for (double v : row.p) trace << ',' << format_number(v);
      for (double v : row.grad) trace << ',' << format_number(v);
      trace << '\n';
      trace.flush();
      metrics << k;
      for (const FrameMetrics& m : row.metrics) {
        metrics << ',' << format_number(m.mean_distance) << ',' << format_number(m.close_fraction);
      }
      metrics << '\n';
      metrics.flush();

      if (k == 0) {
        write_snapshots(problem, traj, out_dir / "initial");
        write_distance_strips(problem, last, 0, out_dir);
      }
      if (k == iterations) {
        write_snapshots(problem, traj, out_dir / "final");
        if (k > 0) write_distance_strips(problem, last, k, out_dir);
      }
      result.rows.push_back(std::move(row));
      if (k < iterations) p = gd_step(p, g.grad, scene.optimizer.learning_rate);
    } catch (const std::exception& e) {
      result.failure = e.what();
      trace << "# failure at iteration " << k << ": " << e.what() << '\n';
      trace.flush();
      throw;
    }
  }
  return result;
}

}  // namespace softdr
