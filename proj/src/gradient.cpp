#include "softdr/gradient.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <thread>

namespace softdr {

GradientMethod gradient_method_from_string(const std::string& s) {
  if (s == "fd" || s == "fd_central") return GradientMethod::fd_central;
  if (s == "adjoint") return GradientMethod::adjoint;
  throw ValidationError("unknown gradient method '" + s + "' (expected fd_central or adjoint)");
}

std::string to_string(GradientMethod m) {
  return m == GradientMethod::fd_central ? "fd_central" : "adjoint";
}

GradientReport fd_gradient(const Problem& problem, std::span<const double> pull_ratios,
                           double epsilon, int threads) {
  if (!(epsilon > 0)) throw ValidationError("fd epsilon must be > 0");
  const std::size_t c = problem.cable_count();
  if (pull_ratios.size() != c) throw ValidationError("pull ratio count does not match cables");

  // job 0 is the unperturbed run, then +eps / -eps for each cable
  const std::size_t jobs = 2 * c + 1;
  std::vector<Evaluation> results(jobs);
  std::vector<std::exception_ptr> errors(jobs);
  auto run = [&](std::size_t j) {
    try {
      std::vector<double> p(pull_ratios.begin(), pull_ratios.end());
      if (j > 0) p[(j - 1) / 2] += ((j - 1) % 2 == 0 ? epsilon : -epsilon);
      results[j] = evaluate(problem, p);
    } catch (...) {
      errors[j] = std::current_exception();
    }
  };
  const int workers = std::clamp(threads, 1, static_cast<int>(jobs));
  if (workers == 1) {
    for (std::size_t j = 0; j < jobs; ++j) run(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t j; (j = next.fetch_add(1)) < jobs;) run(j);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  GradientReport r;
  r.method = GradientMethod::fd_central;
  r.grad.resize(c);
  r.step_sizes.assign(c, epsilon);
  for (std::size_t i = 0; i < c; ++i) {
    const double plus = results[2 * i + 1].loss, minus = results[2 * i + 2].loss;
    r.grad[i] = (plus - minus) / (2 * epsilon);
    if (!std::isfinite(r.grad[i])) {
      throw NumericalError("fd gradient for cable " + std::to_string(i + 1) + " is not finite");
    }
  }
  r.eval = std::move(results[0]);
  r.loss_value = r.eval.loss;
  return r;
}

GradientReport adjoint_gradient(const Problem& problem, std::span<const double> pull_ratios,
                                long checkpoint_interval) {
  const Dynamics& dyn = problem.dynamics;
  const std::size_t c = problem.cable_count();
  if (pull_ratios.size() != c) throw ValidationError("pull ratio count does not match cables");
  if (checkpoint_interval < 0) throw ValidationError("checkpoint interval must be >= 0");
  validate(problem.sim);

  const double dt = problem.sim.dt;
  const long steps = step_count(problem.duration, dt);
  const long k = checkpoint_interval > 0
                     ? checkpoint_interval
                     : std::max(1L, static_cast<long>(std::ceil(std::sqrt(static_cast<double>(steps)))));
  const std::vector<long> frames = frame_steps(steps, problem.sim);
  const double frame_weight = 1.0 / static_cast<double>(frames.size());
  const std::size_t n = dyn.mesh().vertex_count();

  // Forward: loss, checkpoints, and the loss gradient at each frame.
  GradientReport r;
  r.method = GradientMethod::adjoint;
  r.checkpoint_interval = k;
  Evaluation& eval = r.eval;
  eval.object_distance.assign(problem.objects.size(), 0.0);
  eval.trajectory.steps = steps;
  eval.trajectory.frame_steps = frames;
  std::map<long, SimState> checkpoints;
  std::map<long, Field3> frame_grads;
  std::size_t next_frame = 0;
  auto visit = [&](long step, const SimState& s) {
    if (step < steps && step % k == 0) checkpoints[step] = s;
    if (next_frame < frames.size() && frames[next_frame] == step) {
      ++next_frame;
      eval.trajectory.frames.push_back(s);
      const auto sums = frame_distance_sums(problem, s.positions);
      for (std::size_t o = 0; o < sums.size(); ++o) eval.object_distance[o] += sums[o];
      if (step > 0) {
        Field3 g = zero_field(n);
        add_frame_gradient(problem, s.positions, frame_weight, g);
        frame_grads[step] = std::move(g);
      }
    }
  };
  SimState state = dyn.rest_state();
  visit(0, state);
  integrate(dyn, pull_ratios, state, 0, steps, dt, &eval.trajectory.max_inverted, visit);
  eval.trajectory.final_state = state;
  for (double& d : eval.object_distance) d /= 6.0 * static_cast<double>(frames.size());
  combine_losses(problem, eval);
  r.loss_value = eval.loss;
  r.checkpoints_stored = checkpoints.size();

  // Backward sweep, one checkpoint segment at a time.
  Field3 x_bar = zero_field(n), v_bar = zero_field(n);
  if (auto it = frame_grads.find(steps); it != frame_grads.end()) x_bar = it->second;
  std::vector<double> p_bar(c, 0.0);
  const auto& masses = dyn.masses();
  const auto& fixed = dyn.fixed_mask();
  Field3 a(n), x_prev(n), v_prev(n);
  std::vector<SimState> segment;
  for (auto cp = checkpoints.rbegin(); cp != checkpoints.rend(); ++cp) {
    const long begin = cp->first, end = std::min(begin + k, steps);
    segment.assign(1, cp->second);
    for (long s = begin + 1; s < end; ++s) {
      SimState next = segment.back();
      integrate(dyn, pull_ratios, next, s - 1, s, dt);
      segment.push_back(std::move(next));
    }
    for (long s = end - 1; s >= begin; --s) {
      const SimState& st = segment[s - begin];
      for (std::size_t i = 0; i < n; ++i) {
        x_prev[i] = x_bar[i];
        if (fixed[i]) {
          v_prev[i].setZero();
          a[i].setZero();
        } else {
          const Vec3 v_tilde = v_bar[i] + dt * x_bar[i];
          v_prev[i] = v_tilde;
          a[i] = (dt / masses[i]) * v_tilde;
        }
      }
      dyn.total_forces_vjp(st, pull_ratios, a, x_prev, v_prev, p_bar);
      if (s > 0)
        if (auto it = frame_grads.find(s); it != frame_grads.end())
          for (std::size_t i = 0; i < n; ++i) x_prev[i] += it->second[i];
      std::swap(x_bar, x_prev);
      std::swap(v_bar, v_prev);
      for (std::size_t i = 0; i < n; ++i) {
        if (!x_bar[i].allFinite() || !v_bar[i].allFinite()) {
          throw NumericalError("adjoint is not finite at step " + std::to_string(s));
        }
      }
    }
  }
  r.grad = p_bar;
  for (std::size_t i = 0; i < c; ++i) {
    if (!std::isfinite(r.grad[i])) {
      throw NumericalError("adjoint gradient for cable " + std::to_string(i + 1) + " is not finite");
    }
  }
  return r;
}

}  // namespace softdr
