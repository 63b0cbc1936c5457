#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "softdr/cable.hpp"
#include "softdr/common.hpp"
#include "softdr/contact.hpp"
#include "softdr/elasticity.hpp"
#include "softdr/tetmesh.hpp"

namespace softdr {

struct SimState {
  Field3 positions;
  Field3 velocities;
  double time = 0;
};

/// Integration and frame-sampling settings.
///
/// Frames are the steps whose states feed the losses. With frame_stride > 0
/// every stride-th step is recorded; otherwise frame_count steps spread
/// uniformly over the final frame_window fraction of the run, ending at the
/// last step.
struct SimConfig {
  double dt = 5e-5;
  Vec3 gravity{0, 0, -9.81};
  bool collisions_enabled = false;
  ContactParams contact;
  int frame_count = 10;
  double frame_window = 0.5;
  int frame_stride = 0;
};

void validate(const SimConfig& c);

/// Number of steps covering `duration`: ceil(duration / dt), with a relative
/// slack so that exact multiples are not rounded up.
long step_count(double duration, double dt);

/// Sorted, unique step indices at which frames are recorded.
std::vector<long> frame_steps(long total_steps, const SimConfig& config);

/// Everything that enters F_total: elasticity, damping, gravity, cables and
/// (optionally) penalty contact against analytic shapes.
class Dynamics {
 public:
  Dynamics(TetMesh mesh, const Material& material, std::vector<Cable> cables, CableMode mode,
           std::vector<SDFShape> contact_shapes, ContactParams contact, Vec3 gravity);

  const TetMesh& mesh() const { return mesh_; }
  const ElasticModel& elastic() const { return elastic_; }
  const std::vector<Cable>& cables() const { return cables_; }
  std::size_t cable_count() const { return cables_.size(); }
  CableMode cable_mode() const { return mode_; }
  const std::vector<SDFShape>& contact_shapes() const { return shapes_; }
  const std::vector<double>& masses() const { return masses_; }
  const std::vector<char>& fixed_mask() const { return fixed_; }

  SimState rest_state() const;

  /// out = sum of cable forces (cable order) + elastic + gravity + contact.
  /// Fixed nodes receive their computed force; the integrator zeroes them.
  void total_forces(const SimState& s, std::span<const double> pull_ratios, std::span<Vec3> out,
                    int* inverted = nullptr) const;

  /// Adjoint of total_forces for cotangent `a`: accumulates into x_bar, v_bar
  /// and p_bar.
  void total_forces_vjp(const SimState& s, std::span<const double> pull_ratios,
                        std::span<const Vec3> a, std::span<Vec3> x_bar, std::span<Vec3> v_bar,
                        std::span<double> p_bar) const;

 private:
  TetMesh mesh_;
  ElasticModel elastic_;
  std::vector<Cable> cables_;
  CableMode mode_;
  std::vector<SDFShape> shapes_;
  ContactParams contact_;
  Vec3 gravity_;
  std::vector<double> masses_;
  std::vector<char> fixed_;
};

using ForcesFn = std::function<void(const SimState&, std::span<Vec3>)>;

/// Semi-implicit Euler: v' = v + dt F(x, v) / m (zero on fixed nodes),
/// x' = x + dt v'. Throws NumericalError on non-finite forces or state.
SimState step(const SimState& state, const ForcesFn& forces_fn, std::span<const double> masses,
              std::span<const char> fixed_mask, double dt, long step_index = 0);

struct Trajectory {
  SimState final_state;
  std::vector<long> frame_steps;
  std::vector<SimState> frames;
  long steps = 0;
  int max_inverted = 0;
};

/// Per-step observer: (step index after the update, state).
using StepObserver = std::function<void(long, const SimState&)>;

/// Advances `state` in place from step `from` to step `to`.
void integrate(const Dynamics& dyn, std::span<const double> pull_ratios, SimState& state,
               long from, long to, double dt, int* max_inverted = nullptr,
               const StepObserver& observer = {});

/// Runs from the rest state for ceil(duration / dt) steps, recording frames.
Trajectory simulate(const Dynamics& dyn, std::span<const double> pull_ratios, double duration,
                    const SimConfig& config);

/// Binary state dump: "SDRSTATE" magic, u64 vertex count, f64 time, then
/// positions and velocities as little-endian f64 triples.
void write_state(const std::filesystem::path& path, const SimState& s);
SimState read_state(const std::filesystem::path& path);

/// Surface of `mesh` at `positions` as a Wavefront OBJ.
void write_obj(const std::filesystem::path& path, const TetMesh& mesh,
               std::span<const Vec3> positions);

}  // namespace softdr
