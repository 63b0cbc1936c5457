// Command-line front end: run, simulate, render, gradcheck.

#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "softdr/runner.hpp"

using namespace softdr;

namespace {

constexpr int kValidation = 2;
constexpr int kNumerical = 3;

std::vector<double> parse_list(const std::string& s, std::size_t expected) {
  std::vector<double> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError("--p: '" + item + "' is not a number");
    }
  }
  if (out.size() != expected) {
    throw ValidationError("--p: expected " + std::to_string(expected) + " values, got " +
                          std::to_string(out.size()));
  }
  return out;
}

int cmd_run(const std::string& scene_path, const std::string& out, std::optional<int> iters,
            const std::string& gradient, int threads) {
  Scene scene = parse_scene_file(scene_path);
  if (iters) {
    if (*iters < 0) throw ValidationError("--iters must be >= 0");
    scene.optimizer.iterations = *iters;
  }
  if (!gradient.empty()) scene.optimizer.gradient_method = gradient_method_from_string(gradient);
  const RunResult r = run_experiment(scene, out, threads);
  const TraceRow& first = r.rows.front();
  const TraceRow& last = r.rows.back();
  std::printf("%s: %zu evaluations, loss %.6g -> %.6g\n", scene.name.c_str(), r.rows.size(),
              first.loss, last.loss);
  std::printf("final p:");
  for (double v : last.p) std::printf(" %.6g", v);
  std::printf("\nartifacts in %s\n", out.c_str());
  return 0;
}

int cmd_simulate(const std::string& scene_path, const std::string& p_list, const std::string& out) {
  const Scene scene = parse_scene_file(scene_path);
  const Problem problem = build_problem(scene);
  const auto p = parse_list(p_list, problem.cable_count());
  const Evaluation eval = evaluate(problem, p);
  std::filesystem::create_directories(out);
  write_state(std::filesystem::path(out) / "state.bin", eval.trajectory.final_state);
  for (std::size_t i = 0; i < eval.trajectory.frames.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "frame_%08ld.obj", eval.trajectory.frame_steps[i]);
    write_obj(std::filesystem::path(out) / name, problem.dynamics.mesh(),
              eval.trajectory.frames[i].positions);
  }
  std::printf("%ld steps, %zu frames, max inverted tets %d\n", eval.trajectory.steps,
              eval.trajectory.frames.size(), eval.trajectory.max_inverted);
  std::printf("loss %.9g (grip %.9g, avoid %.9g)\n", eval.loss, eval.grip_term, eval.avoid_term);
  return 0;
}

int cmd_render(const std::string& scene_path, const std::string& state_path, const std::string& out) {
  const Scene scene = parse_scene_file(scene_path);
  const Problem problem = build_problem(scene);
  const SimState state = read_state(state_path);
  if (state.positions.size() != problem.dynamics.mesh().vertex_count()) {
    throw ValidationError("state has " + std::to_string(state.positions.size()) +
                          " vertices, robot mesh has " +
                          std::to_string(problem.dynamics.mesh().vertex_count()));
  }
  std::filesystem::create_directories(out);
  const std::filesystem::path dir(out);
  for (std::size_t o = 0; o < problem.objects.size(); ++o) {
    const ViewedObject& obj = problem.objects[o];
    const double near = obj.rig.faces[0].near, far = obj.rig.faces[0].far;
    const auto robot = render_robot(problem, state.positions, static_cast<int>(o));
    const auto delta = distance_images(problem, state.positions, static_cast<int>(o));
    write_pgm16(dir / ("robot_" + obj.id + ".pgm"), cube_strip(robot), near, far);
    write_pgm16(dir / ("object_" + obj.id + ".pgm"), cube_strip(obj.images), near, far);
    write_pgm16(dir / ("delta_" + obj.id + ".pgm"), cube_strip(delta), 0.0, far);
    const FrameMetrics m = final_frame_metrics(problem, state.positions, static_cast<int>(o));
    std::printf("%s: mean distance %.9g m, contact-close fraction %.6f\n", obj.id.c_str(),
                m.mean_distance, m.close_fraction);
  }
  return 0;
}

int cmd_gradcheck(const std::string& scene_path, const std::string& p_list, double epsilon,
                  int threads) {
  const Scene scene = parse_scene_file(scene_path);
  const Problem problem = build_problem(scene);
  const std::size_t c = problem.cable_count();
  const std::vector<double> p = p_list.empty() ? std::vector<double>(c, 0.0) : parse_list(p_list, c);
  const GradientReport fd = fd_gradient(problem, p, epsilon, threads);
  const GradientReport adj = adjoint_gradient(problem, p, scene.optimizer.checkpoint_interval);
  std::printf("loss fd %.12g adjoint %.12g\n", fd.loss_value, adj.loss_value);
  std::printf("%-6s %20s %20s %14s %14s\n", "cable", "fd_central", "adjoint", "abs_err", "rel_err");
  double dot = 0, nf = 0, na = 0;
  for (std::size_t i = 0; i < c; ++i) {
    const double a = adj.grad[i], f = fd.grad[i];
    const double abs_err = std::abs(a - f);
    const double rel = abs_err / std::max(std::abs(f), 1e-300);
    std::printf("%-6zu %20.12g %20.12g %14.6g %14.6g\n", i + 1, f, a, abs_err, rel);
    dot += a * f;
    nf += f * f;
    na += a * a;
  }
  const double cosine = (nf > 0 && na > 0) ? dot / std::sqrt(nf * na) : 1.0;
  std::printf("cosine similarity %.9f (checkpoint interval %ld, %zu checkpoints)\n", cosine,
              adj.checkpoint_interval, adj.checkpoints_stored);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable cable-driven soft robot toolkit"};
  app.require_subcommand(1);

  std::string scene, out, gradient, p_list, state;
  std::optional<int> iters;
  int threads = 1;
  double epsilon = 1e-3;

  auto* run = app.add_subcommand("run", "optimize pull ratios by projected gradient descent");
  run->add_option("scene", scene, "scene JSON")->required();
  run->add_option("--out", out, "output directory")->required();
  run->add_option("--iters", iters, "override optimizer.iterations");
  run->add_option("--gradient", gradient, "fd or adjoint")->check(CLI::IsMember({"fd", "adjoint"}));
  run->add_option("--threads", threads, "threads for finite-difference probes")->check(CLI::PositiveNumber);

  auto* sim = app.add_subcommand("simulate", "simulate at fixed pull ratios");
  sim->add_option("scene", scene, "scene JSON")->required();
  sim->add_option("--p", p_list, "comma-separated pull ratios")->required();
  sim->add_option("--out", out, "output directory")->required();

  auto* render = app.add_subcommand("render", "render a saved state from every object rig");
  render->add_option("scene", scene, "scene JSON")->required();
  render->add_option("--state", state, "state dump from simulate")->required();
  render->add_option("--out", out, "output directory")->required();

  auto* check = app.add_subcommand("gradcheck", "compare finite-difference and adjoint gradients");
  check->add_option("scene", scene, "scene JSON")->required();
  check->add_option("--p", p_list, "comma-separated pull ratios (default zeros)");
  check->add_option("--epsilon", epsilon, "central difference step")->check(CLI::PositiveNumber);
  check->add_option("--threads", threads, "threads for finite-difference probes")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kValidation;
  }

  try {
    if (*run) return cmd_run(scene, out, iters, gradient, threads);
    if (*sim) return cmd_simulate(scene, p_list, out);
    if (*render) return cmd_render(scene, state, out);
    return cmd_gradcheck(scene, p_list, epsilon, threads);
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kValidation;
  }
}
